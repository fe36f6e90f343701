// Copyright 2026 The fgsty Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fgsty/log.hpp"

#include <atomic>
#include <iostream>

namespace fgsty {
namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::kWarning)};

}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_info(std::string_view msg) {
  if (g_level >= static_cast<int>(LogLevel::kInfo)) {
    std::cerr << "[fgsty] " << msg << "\n";
  }
}

void log_warning(std::string_view msg) {
  if (g_level >= static_cast<int>(LogLevel::kWarning)) {
    std::cerr << "[fgsty] warning: " << msg << "\n";
  }
}

}  // namespace fgsty
