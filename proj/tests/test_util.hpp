/*
 * Copyright 2026 The hetero-fdl Authors.
 *
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

#ifndef HFDL_TESTS_TEST_UTIL_HPP_
#define HFDL_TESTS_TEST_UTIL_HPP_

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/error.hpp"

namespace hfdl::testing {

#define EXPECT_HFDL_ERROR(stmt, expected_code)                         \
  do {                                                                 \
    try {                                                              \
      stmt;                                                            \
      ADD_FAILURE() << "expected " << error_code_name(expected_code); \
    } catch (const ::hfdl::Error& e) {                                 \
      EXPECT_EQ(e.code(), expected_code) << e.what();                  \
    }                                                                  \
  } while (0)

inline std::string csv_header() {
  return "patient_id,doctor_id,service_code,service_type,timestamp,"
         "patient_age,patient_sex,patient_region,doctor_specialty,"
         "doctor_region\n";
}

inline std::string csv_row(const std::string& p, const std::string& d,
                           const std::string& s, const std::string& type,
                           const std::string& date) {
  return p + "," + d + "," + s + "," + type + "," + date +
         ",40,F,north,cardio,north\n";
}

inline ClaimTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  return read_claims_csv(in);
}

// Five nodes: two patients, one doctor, two services.
inline ClaimTable toy_claims() {
  return parse_csv(csv_header() +
                   csv_row("p0", "d0", "s0", "dx", "2020-01-01") +
                   csv_row("p0", "d0", "s1", "rx", "2020-01-05") +
                   csv_row("p1", "d0", "s0", "dx", "2020-02-01") +
                   csv_row("p1", "d0", "s1", "rx", "2020-02-03"));
}

}  // namespace hfdl::testing

#endif  // HFDL_TESTS_TEST_UTIL_HPP_
