#include "riskcast/synthgen.hpp"

#include "riskcast/csv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace riskcast {

void SynthConfig::validate() const {
  if (n_patients < 1) throw ConfigError("n_patients must be >= 1");
  if (length_min < 2 || length_max < length_min)
    throw ConfigError("bad series length bounds");
  if (length_mean <= 0 || length_sd <= 0) throw ConfigError("bad series length moments");
  if (n_binary_components < 0 || n_ordinal_components < 0 || n_continuous_views < 0 ||
      n_distractors < 0 || n_static < 0)
    throw ConfigError("feature counts must be >= 0");
  if (n_dynamic() < 1) throw ConfigError("need at least one dynamic feature");
  if (excitation_window < 1) throw ConfigError("excitation_window must be >= 1");
  if (ar_coef <= -1.0 || ar_coef >= 1.0) throw ConfigError("ar_coef must be in (-1,1)");
  if (state_noise_sd < 0 || view_noise_sd < 0) throw ConfigError("noise sds must be >= 0");
  if (missing_dynamic_rate < 0 || missing_dynamic_rate >= 1 ||
      missing_event_patient_rate < 0 || missing_event_patient_rate > 1 || day_skip_rate < 0 ||
      day_skip_rate >= 1)
    throw ConfigError("bad missingness rates");
  if (season_period <= 0) throw ConfigError("season_period must be > 0");
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// mean and sd of a lognormal(mu, sigma) truncated to [lo, hi]
std::pair<double, double> truncated_moments(double mu, double sigma, double lo, double hi) {
  const double a = (std::log(lo) - mu) / sigma;
  const double b = (std::log(hi) - mu) / sigma;
  const double mass = normal_cdf(b) - normal_cdf(a);
  const double m1 = std::exp(mu + 0.5 * sigma * sigma) *
                    (normal_cdf(b - sigma) - normal_cdf(a - sigma)) / mass;
  const double m2 = std::exp(2.0 * mu + 2.0 * sigma * sigma) *
                    (normal_cdf(b - 2.0 * sigma) - normal_cdf(a - 2.0 * sigma)) / mass;
  return {m1, std::sqrt(std::max(m2 - m1 * m1, 1e-12))};
}

}  // namespace

std::pair<double, double> fit_truncated_lognormal(double mean, double sd, double lo, double hi) {
  const double cv2 = (sd / mean) * (sd / mean);
  double sigma = std::sqrt(std::log1p(cv2));
  double mu = std::log(mean) - 0.5 * sigma * sigma;
  for (int iter = 0; iter < 400; ++iter) {
    const auto [m, s] = truncated_moments(mu, sigma, lo, hi);
    const double mean_err = std::log(mean / m);
    const double cv_err = std::log((sd / mean) / (s / m));
    if (std::abs(mean_err) < 1e-10 && std::abs(cv_err) < 1e-10) break;
    mu += 0.8 * mean_err;
    sigma = std::clamp(sigma * std::exp(0.5 * cv_err), 0.02, 4.0);
  }
  return {mu, sigma};
}

namespace {

struct FeatureLayout {
  std::vector<double> binary_loading;   // per binary component
  std::vector<double> binary_offset;
  std::vector<double> ordinal_loading;  // per ordinal component
  std::vector<double> view_loading;     // per continuous view
};

FeatureLayout make_layout(const SynthConfig& cfg, Rng& rng) {
  FeatureLayout lay;
  std::uniform_real_distribution<double> load(0.5, 1.2);
  std::uniform_real_distribution<double> offset(-0.8, 0.2);
  for (int i = 0; i < cfg.n_binary_components; ++i) {
    lay.binary_loading.push_back(load(rng));
    lay.binary_offset.push_back(offset(rng));
  }
  for (int i = 0; i < cfg.n_ordinal_components; ++i) lay.ordinal_loading.push_back(load(rng));
  for (int i = 0; i < cfg.n_continuous_views; ++i) lay.view_loading.push_back(load(rng));
  return lay;
}

FeatureSchema make_schema(const SynthConfig& cfg) {
  FeatureSchema schema;
  for (const auto& name : synth_binary_components(cfg))
    schema.dynamic.push_back({name, FeatureKind::binary});
  for (const auto& name : synth_ordinal_components(cfg))
    schema.dynamic.push_back({name, FeatureKind::ordinal, 2, true});
  for (int i = 0; i < cfg.n_continuous_views; ++i)
    schema.dynamic.push_back({"view" + std::to_string(i + 1), FeatureKind::continuous});
  for (int i = 0; i < cfg.n_distractors; ++i)
    schema.dynamic.push_back({"noise" + std::to_string(i + 1), FeatureKind::continuous});
  for (int i = 0; i < cfg.n_static; ++i) {
    const std::string name = "static" + std::to_string(i + 1);
    if (i % 5 == 1)
      schema.statics.push_back({name, FeatureKind::binary});
    else if (i % 5 == 3)
      schema.statics.push_back({name, FeatureKind::ordinal, 5, false});
    else
      schema.statics.push_back({name, FeatureKind::continuous});
  }
  schema.validate();
  return schema;
}

std::string patient_name(int i, int total) {
  const int width = std::max(3, int(std::to_string(total).size()));
  std::string num = std::to_string(i + 1);
  return "p" + std::string(width - num.size(), '0') + num;
}

}  // namespace

std::vector<std::string> synth_binary_components(const SynthConfig& cfg) {
  std::vector<std::string> names;
  for (int i = 0; i < cfg.n_binary_components; ++i)
    names.push_back("comp_b" + std::to_string(i + 1));
  return names;
}

std::vector<std::string> synth_ordinal_components(const SynthConfig& cfg) {
  std::vector<std::string> names;
  for (int i = 0; i < cfg.n_ordinal_components; ++i)
    names.push_back("comp_v" + std::to_string(i + 1));
  return names;
}

SynthResult generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  SynthResult result;
  result.cohort.schema = make_schema(cfg);

  Rng layout_rng(derive_seed(cfg.seed, 0));
  const FeatureLayout lay = make_layout(cfg, layout_rng);
  const auto [len_mu, len_sigma] =
      fit_truncated_lognormal(cfg.length_mean, cfg.length_sd, cfg.length_min, cfg.length_max);

  const int base_day = parse_iso_date("2020-01-01");
  const Index n_dyn = cfg.n_dynamic();

  for (int p = 0; p < cfg.n_patients; ++p) {
    Rng rng(derive_seed(cfg.seed, 1 + std::uint64_t(p)));
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::lognormal_distribution<double> len_dist(len_mu, len_sigma);
    int tp = 0;
    do {
      tp = int(std::lround(len_dist(rng)));
    } while (tp < cfg.length_min || tp > cfg.length_max);

    PatientRecord rec;
    rec.patient_id = patient_name(p, cfg.n_patients);
    rec.days.reserve(tp);
    int day = base_day + (p * 17) % 365;
    for (int t = 0; t < tp; ++t) {
      if (t > 0) {
        day += 1;
        if (cfg.day_skip_rate > 0 && unif(rng) < cfg.day_skip_rate)
          day += 1 + (unif(rng) < 0.5 ? 0 : 1);  // 2-3 day gap
      }
      rec.days.push_back(day);
    }

    rec.statics.resize(cfg.n_static);
    for (int i = 0; i < cfg.n_static; ++i) {
      const auto& decl = result.cohort.schema.statics[i];
      switch (decl.kind) {
        case FeatureKind::binary:
          rec.statics[i] = unif(rng) < 0.3 ? 1.0 : 0.0;
          break;
        case FeatureKind::ordinal:
          rec.statics[i] = 1 + int(unif(rng) * decl.s_max) % decl.s_max;
          break;
        case FeatureKind::continuous:
          rec.statics[i] = stdnorm(rng);
          break;
      }
    }

    rec.dynamics.resize(n_dyn, tp);
    rec.events.resize(tp);
    auto& oracle = result.oracle.by_patient_day[rec.patient_id];

    const double stationary_sd =
        cfg.state_noise_sd / std::sqrt(std::max(1.0 - cfg.ar_coef * cfg.ar_coef, 1e-9));
    double state_prev = stationary_sd * stdnorm(rng);  // state before the first day
    std::vector<std::uint8_t> history;                 // events so far

    for (int t = 0; t < tp; ++t) {
      // hazard for the event on day t uses information through day t-1
      bool recent = false;
      for (int k = 1; k <= cfg.excitation_window && k <= t; ++k)
        recent = recent || history[t - k];
      double logit_t = cfg.base_logit + cfg.state_weight * state_prev +
                       (recent ? cfg.self_excitation : 0.0) +
                       cfg.static_weight * rec.statics[0] +
                       cfg.season_amplitude *
                           std::sin(2.0 * M_PI * double(rec.days[t] - base_day) /
                                    cfg.season_period) +
                       cfg.drift * double(t) / double(tp);
      const double prob = sigmoid(logit_t);
      oracle[rec.days[t]] = prob;
      const std::uint8_t event = unif(rng) < prob ? 1 : 0;
      rec.events[t] = static_cast<std::int8_t>(event);
      history.push_back(event);

      // day-t state and its feature views
      const double state = cfg.ar_coef * state_prev + cfg.state_noise_sd * stdnorm(rng);
      Index f = 0;
      for (int i = 0; i < cfg.n_binary_components; ++i, ++f) {
        const double z = lay.binary_loading[i] * state + lay.binary_offset[i];
        rec.dynamics(f, t) = unif(rng) < sigmoid(z) ? 1.0 : 0.0;
      }
      for (int i = 0; i < cfg.n_ordinal_components; ++i, ++f) {
        const double z = lay.ordinal_loading[i] * state + 0.7 * stdnorm(rng);
        rec.dynamics(f, t) = z < -0.5 ? 0.0 : (z < 0.8 ? 1.0 : 2.0);
      }
      for (int i = 0; i < cfg.n_continuous_views; ++i, ++f)
        rec.dynamics(f, t) = lay.view_loading[i] * state + cfg.view_noise_sd * stdnorm(rng);
      for (int i = 0; i < cfg.n_distractors; ++i, ++f) rec.dynamics(f, t) = stdnorm(rng);
      state_prev = state;
    }

    if (cfg.missing_dynamic_rate > 0) {
      for (Index f = 0; f < n_dyn; ++f)
        for (int t = 0; t < tp; ++t)
          if (unif(rng) < cfg.missing_dynamic_rate)
            rec.dynamics(f, t) = std::numeric_limits<double>::quiet_NaN();
    }
    if (cfg.missing_event_patient_rate > 0 && unif(rng) < cfg.missing_event_patient_rate) {
      const int gaps = 1 + int(unif(rng) * 3);
      for (int g = 0; g < gaps; ++g) rec.events[int(unif(rng) * tp)] = -1;
    }

    result.cohort.patients.push_back(std::move(rec));
  }
  std::sort(result.cohort.patients.begin(), result.cohort.patients.end(),
            [](const PatientRecord& a, const PatientRecord& b) {
              return a.patient_id < b.patient_id;
            });
  return result;
}

void save_oracle(const OracleProbs& oracle, const std::string& path) {
  csv::Table t;
  t.header = {"patient_id", "date", "true_prob"};
  for (const auto& [pid, days] : oracle.by_patient_day)
    for (const auto& [day, prob] : days)
      t.rows.push_back({pid, format_iso_date(day), csv::fmt(prob)});
  csv::write_file(path, t);
}

OracleProbs load_oracle(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const Index c_pid = t.col("patient_id");
  const Index c_date = t.col("date");
  const Index c_prob = t.col("true_prob");
  if (c_pid < 0 || c_date < 0 || c_prob < 0)
    throw DataError("oracle file needs patient_id,date,true_prob columns: " + path);
  OracleProbs oracle;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    oracle.by_patient_day[row[c_pid]][parse_iso_date(row[c_date])] =
        csv::parse_double(row[c_prob], path + " row " + std::to_string(r + 2));
  }
  return oracle;
}

Vector bayes_scores(const WindowDataset& ds, std::span<const WindowRef> refs,
                    const OracleProbs& oracle) {
  Vector out(static_cast<Index>(refs.size()));
  for (Index j = 0; j < static_cast<Index>(refs.size()); ++j) {
    const auto& ref = refs[j];
    const auto& s = ds.series()[ref.series];
    const auto pit = oracle.by_patient_day.find(s.patient_id);
    if (pit == oracle.by_patient_day.end())
      throw AlignmentError("oracle has no probabilities for patient '" + s.patient_id + "'");
    const int day = ds.label_day(ref);
    const auto dit = pit->second.find(day);
    if (dit == pit->second.end())
      throw AlignmentError("oracle missing day " + format_iso_date(day) + " for patient '" +
                           s.patient_id + "'");
    out[j] = dit->second;
  }
  return out;
}

}  // namespace riskcast
