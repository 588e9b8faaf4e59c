/*
 * Copyright 2026 The msprog Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/random.hpp"
#include "msprog/subject.hpp"

namespace msprog::synth {

enum class Style { Clinic, Smartphone };

struct Demographics {
  double female_fraction = 0.7;
  // Mixture weights over age buckets <30, 30-50, 50-70, >70.
  std::array<double, 4> age_bucket_weights{0.15, 0.5, 0.3, 0.05};
};

// Latent disability L(t) on the EDSS scale: random walk with per-subject drift.
struct LatentModel {
  double baseline_mean = 3.0;
  double baseline_sd = 1.8;
  double baseline_age_effect = 0.3;  // EDSS units per decade above 45
  double drift_per_year = 0.3;
  double drift_sd = 0.2;
  double drift_age_effect = 0.15;    // EDSS/year per decade above 45
  double noise_sd = 0.3;             // per sqrt(year)
};

struct ClinicOptions {
  double visit_interval_days = 91.0;
  double visit_jitter_days = 14.0;
  double followup_months_min = 12.0;
  double followup_months_max = 48.0;
  double edss_noise_sd = 0.3;
};

struct SmartphoneOptions {
  int horizon_weeks = 8;
  double session_probability = 0.9;
  double second_session_probability = 0.4;
  double test_probability = 0.9;
  double mood_probability = 0.8;
  double attrition_hazard = 0.1;  // weekly probability of permanent drop-out
  double control_fraction = 0.472;
  double control_latent_mean = 0.2;
};

struct GeneratorConfig {
  Style style = Style::Clinic;
  std::size_t n_subjects = 100;
  std::uint64_t seed = 1;
  Demographics demographics;
  LatentModel latent;
  // Multiplier on each test's default noise sd; 0 gives noiseless transforms.
  double test_noise_scale = 1.0;
  std::map<std::string, double> test_noise_sd;  // per-feature override
  // Expected questionnaire resources per visit relative to functional tests.
  double questionnaire_sparsity = 0.1;
  ClinicOptions clinic;
  SmartphoneOptions smartphone;

  void check() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw config_error("INVALID_GENERATOR_CONFIG", std::string(what) + " must be in [0,1]");
    };
    if (n_subjects < 1) throw config_error("INVALID_GENERATOR_CONFIG", "n_subjects must be >= 1");
    prob(demographics.female_fraction, "female_fraction");
    for (double w : demographics.age_bucket_weights)
      if (!(w >= 0.0)) throw config_error("INVALID_GENERATOR_CONFIG", "age bucket weights must be >= 0");
    prob(smartphone.session_probability, "session_probability");
    prob(smartphone.second_session_probability, "second_session_probability");
    prob(smartphone.test_probability, "test_probability");
    prob(smartphone.mood_probability, "mood_probability");
    prob(smartphone.attrition_hazard, "attrition_hazard");
    prob(smartphone.control_fraction, "control_fraction");
    if (questionnaire_sparsity < 0.0) throw config_error("INVALID_GENERATOR_CONFIG", "questionnaire_sparsity must be >= 0");
    if (clinic.visit_interval_days <= 0.0 || clinic.visit_jitter_days < 0.0 ||
        clinic.visit_jitter_days * 2 >= clinic.visit_interval_days)
      throw config_error("INVALID_GENERATOR_CONFIG", "visit jitter must be below half the visit interval");
    if (clinic.followup_months_min < 0.0 || clinic.followup_months_max < clinic.followup_months_min)
      throw config_error("INVALID_GENERATOR_CONFIG", "invalid follow-up range");
    if (smartphone.horizon_weeks < 1) throw config_error("INVALID_GENERATOR_CONFIG", "horizon_weeks must be >= 1");
  }
};

inline GeneratorConfig config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    const auto style = j.value("style", std::string("clinic"));
    if (style == "clinic") c.style = Style::Clinic;
    else if (style == "smartphone") c.style = Style::Smartphone;
    else throw config_error("INVALID_GENERATOR_CONFIG", "unknown style " + style);
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.seed = j.value("seed", c.seed);
    if (j.contains("demographics")) {
      const auto& d = j.at("demographics");
      c.demographics.female_fraction = d.value("female_fraction", c.demographics.female_fraction);
      if (d.contains("age_bucket_weights"))
        c.demographics.age_bucket_weights = d.at("age_bucket_weights").get<std::array<double, 4>>();
    }
    if (j.contains("latent")) {
      const auto& l = j.at("latent");
      auto& L = c.latent;
      L.baseline_mean = l.value("baseline_mean", L.baseline_mean);
      L.baseline_sd = l.value("baseline_sd", L.baseline_sd);
      L.baseline_age_effect = l.value("baseline_age_effect", L.baseline_age_effect);
      L.drift_per_year = l.value("drift_per_year", L.drift_per_year);
      L.drift_sd = l.value("drift_sd", L.drift_sd);
      L.drift_age_effect = l.value("drift_age_effect", L.drift_age_effect);
      L.noise_sd = l.value("noise_sd", L.noise_sd);
    }
    c.test_noise_scale = j.value("test_noise_scale", c.test_noise_scale);
    if (j.contains("test_noise_sd")) c.test_noise_sd = j.at("test_noise_sd").get<std::map<std::string, double>>();
    c.questionnaire_sparsity = j.value("questionnaire_sparsity", c.questionnaire_sparsity);
    if (j.contains("clinic")) {
      const auto& k = j.at("clinic");
      auto& K = c.clinic;
      K.visit_interval_days = k.value("visit_interval_days", K.visit_interval_days);
      K.visit_jitter_days = k.value("visit_jitter_days", K.visit_jitter_days);
      K.followup_months_min = k.value("followup_months_min", K.followup_months_min);
      K.followup_months_max = k.value("followup_months_max", K.followup_months_max);
      K.edss_noise_sd = k.value("edss_noise_sd", K.edss_noise_sd);
    }
    if (j.contains("smartphone")) {
      const auto& s = j.at("smartphone");
      auto& S = c.smartphone;
      S.horizon_weeks = s.value("horizon_weeks", S.horizon_weeks);
      S.session_probability = s.value("session_probability", S.session_probability);
      S.second_session_probability = s.value("second_session_probability", S.second_session_probability);
      S.test_probability = s.value("test_probability", S.test_probability);
      S.mood_probability = s.value("mood_probability", S.mood_probability);
      S.attrition_hazard = s.value("attrition_hazard", S.attrition_hazard);
      S.control_fraction = s.value("control_fraction", S.control_fraction);
      S.control_latent_mean = s.value("control_latent_mean", S.control_latent_mean);
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error("INVALID_GENERATOR_CONFIG", e.what());
  }
  c.check();
  return c;
}

/// EDSS emission: nearest point of the 0.5 grid, clamped to [0, 10].
inline double quantize_edss(double x) {
  return std::clamp(std::round(x * 2.0) / 2.0, 0.0, 10.0);
}

// Observation models. Each test is a monotone transform of the latent score
// plus noise; scales are arbitrary but of realistic magnitude.
struct TestModel {
  const char* name;
  const char* category;
  const char* unit;
  bool higher_is_worse;
  double noise_sd;
  double (*transform)(double latent, double noise);
};

inline const std::vector<TestModel>& clinic_tests() {
  static const std::vector<TestModel> tests = {
      {"NHPT", "dexterity", "s", true, 0.08,
       [](double l, double n) { return 18.0 * std::exp(0.09 * l + n); }},
      {"T25FW", "mobility", "s", true, 0.10,
       [](double l, double n) { return 4.5 * std::exp(0.15 * l + n); }},
      {"PASAT", "cognitive", "correct", false, 5.0,
       [](double l, double n) { return std::clamp(55.0 - 2.5 * l + n, 0.0, 60.0); }},
      {"SDMT", "cognitive", "correct", false, 6.0,
       [](double l, double n) { return std::clamp(60.0 - 3.5 * l + n, 0.0, 110.0); }},
  };
  return tests;
}

inline const std::vector<TestModel>& smartphone_tests() {
  static const std::vector<TestModel> tests = {
      {"ips_correct", "cognitive", "count", false, 4.0,
       [](double l, double n) { return std::max(0.0, 40.0 - 3.0 * l + n); }},
      {"ips_time", "cognitive", "s", true, 0.10,
       [](double l, double n) { return 1.2 * std::exp(0.08 * l + n); }},
      {"pinching", "dexterity", "count", false, 3.0,
       [](double l, double n) { return std::max(0.0, 30.0 - 2.0 * l + n); }},
      {"draw_shape_error", "dexterity", "px", true, 0.15,
       [](double l, double n) { return 10.0 * std::exp(0.10 * l + n); }},
      {"walk_steps", "mobility", "steps", false, 15.0,
       [](double l, double n) { return std::max(0.0, 220.0 - 12.0 * l + n); }},
      {"u_turn_speed", "mobility", "rad/s", false, 0.12,
       [](double l, double n) { return std::max(0.05, 1.6 - 0.1 * l + n); }},
      {"balance_sway", "mobility", "m/s2", true, 0.15,
       [](double l, double n) { return 2.0 * std::exp(0.12 * l + n); }},
  };
  return tests;
}

namespace detail {

inline double noise_sd(const GeneratorConfig& c, const TestModel& t) {
  auto it = c.test_noise_sd.find(t.name);
  return it != c.test_noise_sd.end() ? it->second : t.noise_sd * c.test_noise_scale;
}

inline void draw_demographics(const GeneratorConfig& c, CounterRng& rng, SubjectCharacteristics& ch) {
  static constexpr double lo[4] = {18.0, 30.0, 50.0, 70.0};
  static constexpr double hi[4] = {30.0, 50.0, 70.0, 85.0};
  ch.sex = rng.bernoulli(c.demographics.female_fraction) ? Sex::Female : Sex::Male;
  const std::vector<double> w(c.demographics.age_bucket_weights.begin(), c.demographics.age_bucket_weights.end());
  const std::size_t b = rng.categorical(w);
  ch.age = std::floor(rng.uniform(lo[b], hi[b]) * 10.0) / 10.0;
  const bool female = ch.sex == Sex::Female;
  ch.height = std::round(std::clamp(rng.normal(female ? 164.0 : 177.0, 7.0), 130.0, 215.0) * 10.0) / 10.0;
  ch.weight = std::round(std::clamp(rng.normal(female ? 68.0 : 82.0, 12.0), 35.0, 200.0) * 10.0) / 10.0;
}

inline double age_decades(const SubjectCharacteristics& ch) { return (ch.age.value_or(45.0) - 45.0) / 10.0; }

inline std::string subject_id(char prefix, std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i + 1);
  const std::size_t width = std::to_string(n).size();
  return std::string(1, prefix) + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

inline Subject clinic_subject(const GeneratorConfig& c, std::size_t index) {
  CounterRng rng(c.seed, index);
  Subject s;
  s.subject_id = subject_id('C', index, c.n_subjects);
  draw_demographics(c, rng, s.characteristics);
  static const char* countries[] = {"CountryA", "CountryB", "CountryC"};
  s.characteristics.country = countries[rng.below(3)];

  const auto& L = c.latent;
  const auto& K = c.clinic;
  const double dec = age_decades(s.characteristics);
  double latent = std::clamp(L.baseline_mean + L.baseline_age_effect * dec + rng.normal(0.0, L.baseline_sd), 0.0, 9.5);
  const double drift = L.drift_per_year + L.drift_age_effect * dec + rng.normal(0.0, L.drift_sd);
  const double followup = rng.uniform(K.followup_months_min, K.followup_months_max) * seconds::kMonth;
  const std::string trial = "SYN-TRIAL-" + std::to_string(1 + index % 9);

  const auto& tests = clinic_tests();
  const double q_prob = std::min(1.0, c.questionnaire_sparsity * static_cast<double>(tests.size()) / 2.0);
  Timestamp t = 0;
  Timestamp prev_t = 0;
  for (int visit = 0;; ++visit) {
    if (visit > 0) {
      const double jitter = rng.uniform(-K.visit_jitter_days, K.visit_jitter_days);
      t = static_cast<Timestamp>(std::llround((visit * K.visit_interval_days + jitter) * seconds::kDay));
      if (static_cast<double>(t) > followup) break;
      const double dt_years = static_cast<double>(t - prev_t) / seconds::kYear;
      latent = std::clamp(latent + drift * dt_years + rng.normal(0.0, L.noise_sd * std::sqrt(dt_years)), 0.0, 10.0);
    }
    prev_t = t;
    ClinicalEvent ev;
    ev.timestamp = t;
    ev.resources.push_back(
        FunctionalTest{"EDSS", "edss", quantize_edss(latent + rng.normal(0.0, K.edss_noise_sd)), "score"});
    for (const auto& tm : tests)
      ev.resources.push_back(FunctionalTest{tm.name, tm.category, tm.transform(latent, rng.normal(0.0, noise_sd(c, tm))), tm.unit});
    if (rng.bernoulli(q_prob)) {
      const double v = std::clamp(std::round(8.0 * latent + rng.normal(0.0, 10.0)), 0.0, 100.0);
      ev.resources.push_back(Questionnaire{"MSWS12", "mobility", std::nullopt, v, std::nullopt});
    }
    if (rng.bernoulli(q_prob)) {
      static const char* levels[] = {"none", "mild", "moderate", "severe"};
      const double f = latent + rng.normal(0.0, 1.5);
      const int level = f < 2.0 ? 0 : f < 4.0 ? 1 : f < 6.0 ? 2 : 3;
      ev.resources.push_back(Questionnaire{"FATIGUE", "fatigue", std::nullopt, std::nullopt, std::string(levels[level])});
    }
    if (visit == 0) ev.resources.push_back(GenericResource{"clinical_trial", trial});
    s.episodes.push_back(Episode{{std::move(ev)}});
  }
  return s;
}

inline Subject smartphone_subject(const GeneratorConfig& c, std::size_t index) {
  CounterRng rng(c.seed, index);
  const auto& S = c.smartphone;
  const auto& L = c.latent;
  Subject s;
  s.subject_id = subject_id('F', index, c.n_subjects);
  draw_demographics(c, rng, s.characteristics);
  const bool has_ms = !rng.bernoulli(S.control_fraction);
  s.characteristics.has_ms = has_ms;
  const double dec = age_decades(s.characteristics);
  double latent = has_ms ? std::clamp(L.baseline_mean + L.baseline_age_effect * dec + rng.normal(0.0, L.baseline_sd), 0.0, 9.5)
                         : std::abs(rng.normal(S.control_latent_mean, 0.3));
  const double drift = has_ms ? L.drift_per_year + rng.normal(0.0, L.drift_sd) : 0.0;
  const auto& tests = smartphone_tests();

  bool active = true;
  for (int day = 0; day < S.horizon_weeks * 7 && active; ++day) {
    if (day > 0 && day % 7 == 0 && rng.bernoulli(S.attrition_hazard)) {
      active = false;
      break;
    }
    if (day > 0) {
      const double dt_years = 1.0 / 365.25;
      latent = std::clamp(latent + drift * dt_years + rng.normal(0.0, L.noise_sd * std::sqrt(dt_years)), 0.0, 10.0);
    }
    Episode ep;
    const int sessions = (day == 0 || rng.bernoulli(S.session_probability))
                             ? 1 + (rng.bernoulli(S.second_session_probability) ? 1 : 0)
                             : 0;
    for (int sess = 0; sess < sessions; ++sess) {
      // First session in the morning/afternoon, second in the evening.
      const double hour = sess == 0 ? rng.uniform(7.0, 15.0) : rng.uniform(17.0, 22.0);
      Timestamp t = day * seconds::kDay + static_cast<Timestamp>(hour * seconds::kHour);
      bool any = false;
      for (std::size_t k = 0; k < tests.size(); ++k) {
        const bool forced = day == 0 && sess == 0 && k == 0;
        if (!forced && !rng.bernoulli(S.test_probability)) continue;
        const auto& tm = tests[k];
        ClinicalEvent ev;
        ev.timestamp = t;
        ev.resources.push_back(FunctionalTest{tm.name, tm.category, tm.transform(latent, rng.normal(0.0, noise_sd(c, tm))), tm.unit});
        ep.events.push_back(std::move(ev));
        t += 45;
        any = true;
      }
      if (rng.bernoulli(S.mood_probability) || !any) {
        ClinicalEvent ev;
        ev.timestamp = t;
        const double mood = std::clamp(std::round(2.0 + 0.3 * latent + rng.normal(0.0, 0.8)), 1.0, 5.0);
        ev.resources.push_back(Questionnaire{"mood", "mood", std::nullopt, mood, std::nullopt});
        ep.events.push_back(std::move(ev));
      }
    }
    if (!ep.events.empty()) s.episodes.push_back(std::move(ep));
  }
  return s;
}

}  // namespace detail

/// Deterministic for a fixed config: subject i is drawn from the counter
/// stream (seed, i), independently of every other subject.
inline Cohort generate_cohort(const GeneratorConfig& config) {
  config.check();
  Cohort cohort;
  cohort.reserve(config.n_subjects);
  for (std::size_t i = 0; i < config.n_subjects; ++i)
    cohort.push_back(config.style == Style::Clinic ? detail::clinic_subject(config, i)
                                                   : detail::smartphone_subject(config, i));
  return cohort;
}

// ---------------------------------------------------------------------------

struct CohortStats {
  std::size_t subjects = 0;
  std::size_t events = 0;
  std::map<std::string, std::size_t> sex_histogram;
  std::map<std::string, std::size_t> feature_observations;
  std::size_t has_ms_known = 0;
  std::size_t has_ms_true = 0;
  // task -> class -> count, for classification labels attached to events.
  std::map<std::string, std::map<std::int64_t, std::size_t>> classification_counts;
  // task -> (count, sum) for regression labels.
  std::map<std::string, std::pair<std::size_t, double>> regression_sums;

  double ms_fraction() const {
    return has_ms_known == 0 ? 0.0 : static_cast<double>(has_ms_true) / static_cast<double>(has_ms_known);
  }

  /// Fraction of labeled events carrying class `cls` for `task`.
  double prevalence(const std::string& task, std::int64_t cls) const {
    auto it = classification_counts.find(task);
    if (it == classification_counts.end()) return 0.0;
    std::size_t total = 0;
    for (const auto& [k, n] : it->second) total += n;
    auto c = it->second.find(cls);
    return total == 0 || c == it->second.end() ? 0.0 : static_cast<double>(c->second) / static_cast<double>(total);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"subjects", subjects}, {"events", events}, {"sex", sex_histogram},
                     {"feature_observations", feature_observations}};
    if (has_ms_known > 0) j["ms_fraction"] = ms_fraction();
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [task, counts] : classification_counts) {
      std::size_t total = 0;
      for (const auto& [k, n] : counts) total += n;
      nlohmann::json t{{"count", total}};
      for (const auto& [k, n] : counts)
        t["class_percent"][std::to_string(k)] = 100.0 * static_cast<double>(n) / static_cast<double>(total);
      labels[task] = t;
    }
    for (const auto& [task, cs] : regression_sums)
      labels[task] = {{"count", cs.first}, {"mean", cs.first ? cs.second / cs.first : 0.0}};
    j["labels"] = labels;
    return j;
  }
};

inline CohortStats summarize_cohort(const Cohort& cohort) {
  CohortStats st;
  st.subjects = cohort.size();
  for (const auto& s : cohort) {
    ++st.sex_histogram[std::string(to_string(s.characteristics.sex))];
    if (s.characteristics.has_ms) {
      ++st.has_ms_known;
      if (*s.characteristics.has_ms) ++st.has_ms_true;
    }
    s.for_each_event([&](const ClinicalEvent& ev) {
      ++st.events;
      for (const auto& r : ev.resources)
        if (const auto* name = resource_name(r)) ++st.feature_observations[*name];
      for (const auto& [task, cls] : ev.classification_labels) ++st.classification_counts[task][cls];
      for (const auto& [task, v] : ev.regression_labels) {
        auto& [n, sum] = st.regression_sums[task];
        ++n;
        sum += v;
      }
    });
  }
  return st;
}

}  // namespace msprog::synth
