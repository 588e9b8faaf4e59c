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

#include <string>
#include <vector>

#include "msprog/subject.hpp"

namespace msprog::testing {

inline FunctionalTest test(std::string name, double value, std::string category = "mobility") {
  return FunctionalTest{std::move(name), std::move(category), value, ""};
}

inline Questionnaire numeric_q(std::string name, double value, std::string category = "mobility") {
  return Questionnaire{std::move(name), std::move(category), std::nullopt, value, std::nullopt};
}

inline Questionnaire text_q(std::string name, std::string text) {
  return Questionnaire{std::move(name), "free_text", std::move(text), std::nullopt, std::nullopt};
}

inline ClinicalEvent event(Timestamp t, std::vector<Resource> r) {
  ClinicalEvent ev;
  ev.timestamp = t;
  ev.resources = std::move(r);
  return ev;
}

/// One episode per event.
inline Subject subject(std::string id, std::vector<ClinicalEvent> events, Sex sex = Sex::Female,
                       std::optional<double> age = 40.0) {
  Subject s;
  s.subject_id = std::move(id);
  s.characteristics.sex = sex;
  s.characteristics.age = age;
  for (auto& ev : events) s.episodes.push_back(Episode{{std::move(ev)}});
  return s;
}

}  // namespace msprog::testing
