#pragma once

#include "riskcast/cohort.hpp"
#include "riskcast/types.hpp"
#include "riskcast/windowing.hpp"

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace riskcast {

/// Synthetic cohort with a planted temporal signal: a latent AR(1) risk
/// state observed through noisy feature views, plus self-excitation through
/// the recent event history. Defaults mirror the target cohort's shape
/// (83 patients, series lengths ~ truncated lognormal mean 140 / sd 106,
/// 40 static and 74 dynamic features).
struct SynthConfig {
  int n_patients = 83;

  double length_mean = 140.0;
  double length_sd = 106.0;
  int length_min = 30;
  int length_max = 600;

  // dynamic feature mix (instrument-style components are signal-bearing)
  int n_binary_components = 7;    // summed 0-7 instrument
  int n_ordinal_components = 20;  // 0-2 scored, summed 0-40 instrument
  int n_continuous_views = 5;     // noisy views of the latent state
  int n_distractors = 42;         // independent noise
  int n_static = 40;

  // hazard for the event on day t+1 given information through day t
  double base_logit = -2.8439701045845;  // logit(0.055)
  double state_weight = 0.0;             // on the latent state
  double self_excitation = 0.0;          // on 1[event within the last r days]
  int excitation_window = 7;             // r
  double static_weight = 0.0;            // on the first static feature
  double season_amplitude = 0.0;
  double season_period = 28.0;
  double drift = 0.0;

  // latent state and observation noise
  double ar_coef = 0.8;
  double state_noise_sd = 0.6;
  double view_noise_sd = 0.5;

  // missingness injection
  double missing_dynamic_rate = 0.0;
  double missing_event_patient_rate = 0.0;  // fraction of patients with label gaps
  double day_skip_rate = 0.0;               // chance an entry follows a 2-3 day gap

  std::uint64_t seed = 1;

  void validate() const;
  int n_dynamic() const {
    return n_binary_components + n_ordinal_components + n_continuous_views + n_distractors;
  }
};

/// True conditional event probabilities per patient and calendar day.
struct OracleProbs {
  std::map<std::string, std::map<int, double>> by_patient_day;
};

struct SynthResult {
  Cohort cohort;
  OracleProbs oracle;
};

SynthResult generate_cohort(const SynthConfig& config);

/// Lognormal parameters (mu, sigma) whose [lo,hi]-truncated distribution
/// matches the requested mean and sd (moment-matched by fixed point).
std::pair<double, double> fit_truncated_lognormal(double mean, double sd, double lo, double hi);

void save_oracle(const OracleProbs& oracle, const std::string& path);
OracleProbs load_oracle(const std::string& path);

/// The generator's true next-day probabilities aligned to test windows: an
/// upper-bound reference scorer.
Vector bayes_scores(const WindowDataset& ds, std::span<const WindowRef> refs,
                    const OracleProbs& oracle);

/// Component lists for the two instrument-style baselines planted in the
/// synthetic schema.
std::vector<std::string> synth_binary_components(const SynthConfig& config);
std::vector<std::string> synth_ordinal_components(const SynthConfig& config);

}  // namespace riskcast
