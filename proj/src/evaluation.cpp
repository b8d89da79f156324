#include "riskcast/evaluation.hpp"

#include "riskcast/csv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace riskcast {

namespace {

struct OpPoint {
  double tp;
  double fp;
};

// Cumulative confusion counts at every distinct descending threshold.
std::vector<OpPoint> threshold_path(std::span<const double> scores,
                                    std::span<const double> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<OpPoint> path;
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] > 0.5)
        tp += 1;
      else
        fp += 1;
      ++j;
    }
    path.push_back({tp, fp});
    i = j;
  }
  return path;
}

void count_classes(std::span<const double> labels, double& pos, double& neg) {
  pos = 0;
  for (double y : labels) pos += (y > 0.5) ? 1.0 : 0.0;
  neg = double(labels.size()) - pos;
  if (pos == 0 || neg == 0)
    throw DegenerateLabels("labels are single-class (" + std::to_string(labels.size()) +
                           " items, " + std::to_string(std::size_t(pos)) + " positive)");
}

}  // namespace

PRGCurve prg_curve(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size())
    throw DimensionMismatch("scores/labels length mismatch");
  double p_total = 0, n_total = 0;
  count_classes(labels, p_total, n_total);

  PRGCurve curve;
  curve.pi = p_total / (p_total + n_total);
  // pi/(1-pi) == P/N exactly, so gains are computed from integer counts
  const auto prec_gain = [&](double tp, double fp) {
    return 1.0 - (p_total * fp) / (n_total * tp);
  };
  const auto rec_gain = [&](double tp, double fn) {
    return 1.0 - (p_total * fn) / (n_total * tp);
  };
  const auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

  const std::vector<OpPoint> path = threshold_path(scores, labels);
  // rec_gain >= 0 exactly when tp >= pi * P
  const double tp_entry = curve.pi * p_total;

  OpPoint prev{0.0, 0.0};
  bool entered = false;
  for (const auto& op : path) {
    if (!entered) {
      if (op.tp < tp_entry) {
        prev = op;
        continue;
      }
      entered = true;
      if (op.tp > tp_entry) {
        // interpolate the entry point at rec_gain = 0 in count space
        const double alpha = (tp_entry - prev.tp) / (op.tp - prev.tp);
        const double fp_entry = prev.fp + alpha * (op.fp - prev.fp);
        curve.points.push_back({0.0, clamp01(prec_gain(tp_entry, fp_entry)), tp_entry, fp_entry,
                                p_total - tp_entry});
      }
    }
    curve.points.push_back({clamp01(rec_gain(op.tp, p_total - op.tp)),
                            clamp01(prec_gain(op.tp, op.fp)), op.tp, op.fp, p_total - op.tp});
    prev = op;
  }
  // the lowest threshold accepts everything: the always-positive endpoint
  // (rec_gain 1, prec_gain 0) is always the final path point
  return curve;
}

double auc_prg(const PRGCurve& curve) {
  double area = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.rec_gain - a.rec_gain) * 0.5 * (a.prec_gain + b.prec_gain);
  }
  return area;
}

double auc_prg(std::span<const double> scores, std::span<const double> labels) {
  return auc_prg(prg_curve(scores, labels));
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size())
    throw DimensionMismatch("scores/labels length mismatch");
  double pos = 0, neg = 0;
  count_classes(labels, pos, neg);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;  // midranks of positives
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double tie_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] > 0.5) tie_pos += 1;
      ++j;
    }
    const double midrank = 0.5 * (double(i + 1) + double(j));
    rank_sum += midrank * tie_pos;
    i = j;
  }
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

void ScoredTestSet::add_model(const std::string& name, const Vector& model_scores) {
  if (model_scores.size() != rows())
    throw AlignmentError("model '" + name + "' has " + std::to_string(model_scores.size()) +
                         " scores for " + std::to_string(rows()) + " test windows");
  if (model_column(name) >= 0)
    throw AlignmentError("duplicate model name '" + name + "'");
  scores.conservativeResize(rows(), models() + 1);
  scores.col(models()) = model_scores;
  model_names.push_back(name);
}

Index ScoredTestSet::model_column(const std::string& name) const {
  for (Index i = 0; i < models(); ++i)
    if (model_names[i] == name) return i;
  return -1;
}

double ScoredTestSet::prevalence() const {
  if (labels.empty()) return 0.0;
  double pos = 0;
  for (double y : labels) pos += y;
  return pos / double(labels.size());
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q * double(values.size()));
  const std::size_t k = std::min<std::size_t>(
      values.size() - 1, static_cast<std::size_t>(std::max(rank - 1.0, 0.0)));
  return values[k];
}

std::pair<double, double> ks_normality(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 2) return {0.0, 1.0};
  double mean = 0;
  for (double v : sample) mean += v;
  mean /= double(n);
  double ss = 0;
  for (double v : sample) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / double(n - 1));
  if (sd == 0.0) return {0.0, 1.0};  // degenerate sample: point mass

  std::vector<double> z(sample.begin(), sample.end());
  std::sort(z.begin(), z.end());
  double d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 0.5 * std::erfc(-(z[i] - mean) / (sd * std::sqrt(2.0)));
    d = std::max(d, std::abs(cdf - double(i + 1) / double(n)));
    d = std::max(d, std::abs(cdf - double(i) / double(n)));
  }
  // Stephens' asymptotic tail approximation; parameters are estimated from
  // the sample so this is Lilliefors-style and approximate.
  const double sqrt_n = std::sqrt(double(n));
  const double t = d * (sqrt_n + 0.12 + 0.11 / sqrt_n);
  double p = 0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * double(k) * double(k) * t * t);
  return {d, std::clamp(p, 0.0, 1.0)};
}

std::vector<std::vector<Index>> patient_groups(const ScoredTestSet& testset) {
  std::vector<std::vector<Index>> groups;
  std::map<std::string, std::size_t> group_of;
  for (Index r = 0; r < testset.rows(); ++r) {
    auto [it, inserted] = group_of.emplace(testset.patient_id[r], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(r);
  }
  return groups;
}

std::vector<Index> resample_rows(const std::vector<std::vector<Index>>& groups,
                                 Index block_len, Rng& rng) {
  std::vector<Index> rows;
  for (const auto& g : groups) {
    const Index np = static_cast<Index>(g.size());
    std::uniform_int_distribution<Index> start_dist(0, np - 1);
    Index taken = 0;
    while (taken < np) {
      const Index start = start_dist(rng);
      for (Index j = 0; j < block_len && taken < np; ++j, ++taken)
        rows.push_back(g[(start + j) % np]);
    }
  }
  return rows;
}

BootstrapReport block_bootstrap(const ScoredTestSet& testset, Index n_resamples,
                                Index block_len, std::uint64_t seed) {
  if (testset.rows() == 0) throw DegenerateLabels("empty test set");
  if (testset.models() == 0) throw DataError("no model scores to bootstrap");
  if (n_resamples < 1) throw ConfigError("bootstrap needs at least one resample");
  if (block_len < 1) throw ConfigError("block length must be >= 1");

  BootstrapReport report;
  report.n_resamples = n_resamples;
  report.block_len = block_len;
  report.seed = seed;

  const std::vector<std::vector<Index>> groups = patient_groups(testset);

  const Index n_models = testset.models();
  for (Index m = 0; m < n_models; ++m) {
    ModelBootstrap mb;
    mb.name = testset.model_names[m];
    const Vector col = testset.scores.col(m);
    mb.point_auc = auc_prg(std::span<const double>(col.data(), col.size()), testset.labels);
    mb.resamples.reserve(n_resamples);
    report.models.push_back(std::move(mb));
  }

  Matrix aucs(n_resamples, n_models);
  std::vector<Index> rows;
  std::vector<double> labels(testset.rows());
  std::vector<double> scores(testset.rows());
  constexpr int kMaxRedraws = 1000;

  for (Index r = 0; r < n_resamples; ++r) {
    Rng rng(derive_seed(seed, std::uint64_t(r)));
    int attempts = 0;
    while (true) {
      rows = resample_rows(groups, block_len, rng);
      bool has_pos = false, has_neg = false;
      for (Index i = 0; i < static_cast<Index>(rows.size()); ++i) {
        labels[i] = testset.labels[rows[i]];
        (labels[i] > 0.5 ? has_pos : has_neg) = true;
      }
      if (has_pos && has_neg) break;
      ++report.degenerate_redraws;
      if (++attempts >= kMaxRedraws)
        throw DegenerateResample("resample " + std::to_string(r) + " stayed single-class after " +
                                 std::to_string(kMaxRedraws) + " redraws");
    }
    for (Index m = 0; m < n_models; ++m) {
      for (Index i = 0; i < static_cast<Index>(rows.size()); ++i)
        scores[i] = testset.scores(rows[i], m);
      aucs(r, m) = auc_prg(std::span<const double>(scores.data(), rows.size()),
                           std::span<const double>(labels.data(), rows.size()));
    }
  }

  for (Index m = 0; m < n_models; ++m) {
    auto& mb = report.models[m];
    mb.resamples.assign(aucs.col(m).data(), aucs.col(m).data() + n_resamples);
    mb.ci_lo = percentile(mb.resamples, 0.025);
    mb.ci_hi = percentile(mb.resamples, 0.975);
    mb.ci_contains_point = mb.ci_lo <= mb.point_auc && mb.point_auc <= mb.ci_hi;
    std::tie(mb.ks_stat, mb.ks_p) = ks_normality(mb.resamples);
  }

  report.p_values.resize(n_models, n_models);
  for (Index a = 0; a < n_models; ++a)
    for (Index b = 0; b < n_models; ++b) {
      Index count = 0;
      for (Index r = 0; r < n_resamples; ++r) count += (aucs(r, a) - aucs(r, b) <= 0.0);
      report.p_values(a, b) = double(1 + count) / double(n_resamples + 1);
    }
  return report;
}

std::vector<ComparisonRow> comparison_table(const BootstrapReport& report) {
  std::vector<Index> order(report.models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return report.models[a].point_auc > report.models[b].point_auc;
  });
  std::vector<ComparisonRow> rows;
  if (order.empty()) return rows;
  const Index top = order[0];
  for (const Index m : order) {
    const auto& mb = report.models[m];
    ComparisonRow row;
    row.name = mb.name;
    row.auc = mb.point_auc;
    row.ci_lo = mb.ci_lo;
    row.ci_hi = mb.ci_hi;
    row.diff_vs_top = report.models[top].point_auc - mb.point_auc;
    row.p_vs_top = report.p_values(top, m);
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_prg_csv(const std::vector<std::pair<std::string, PRGCurve>>& curves,
                  const std::string& path) {
  csv::Table t;
  t.header = {"model", "recG", "precG"};
  for (const auto& [name, curve] : curves)
    for (const auto& pt : curve.points)
      t.rows.push_back({name, csv::fmt(pt.rec_gain), csv::fmt(pt.prec_gain)});
  csv::write_file(path, t);
}

void save_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path) {
  csv::Table t;
  t.header = {"model", "auc_prg", "ci_lo", "ci_hi", "diff_vs_top", "p_vs_top"};
  for (const auto& row : rows)
    t.rows.push_back({row.name, csv::fmt(row.auc), csv::fmt(row.ci_lo), csv::fmt(row.ci_hi),
                      csv::fmt(row.diff_vs_top), csv::fmt(row.p_vs_top)});
  csv::write_file(path, t);
}

}  // namespace riskcast
