// Copyright 2026 The NoiseFlow-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <charconv>

#include "noiseflow/model.hpp"

namespace nflow {

ArchitectureSpec ArchitectureSpec::parse(std::string_view text) {
  if (text.empty()) throw ParseError("empty architecture string", 0);
  ArchitectureSpec spec;
  bool seen_signal = false, seen_gain = false, seen_camera = false;
  std::size_t camera_pos = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t dash = text.find('-', pos);
    const std::size_t end = dash == std::string_view::npos ? text.size() : dash;
    const std::string_view token = text.substr(pos, end - pos);
    if (token.empty()) throw ParseError("empty token in architecture string", pos);
    if (token == "S") {
      if (seen_signal) throw ParseError("duplicate S token", pos);
      seen_signal = true;
      spec.tokens.push_back({TokenKind::Signal});
    } else if (token == "G") {
      if (seen_gain) throw ParseError("duplicate G token", pos);
      seen_gain = true;
      spec.tokens.push_back({TokenKind::Gain});
    } else if (token == "CAM") {
      if (seen_camera) throw ParseError("duplicate CAM token", pos);
      seen_camera = true;
      camera_pos = pos;
      spec.tokens.push_back({TokenKind::Camera});
    } else if (token.size() > 2 && token.substr(0, 2) == "Ax") {
      const std::string_view digits = token.substr(2);
      int steps = -1;
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), steps);
      if (ec != std::errc() || ptr != digits.data() + digits.size() || steps < 0) {
        throw ParseError("invalid step count in token '" + std::string(token) + "'", pos + 2);
      }
      spec.tokens.push_back({TokenKind::Steps, steps});
    } else {
      throw ParseError("unknown token '" + std::string(token) + "'", pos);
    }
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  if (seen_camera && !seen_gain) throw ParseError("CAM requires a G token", camera_pos);
  return spec;
}

std::string ArchitectureSpec::render() const {
  std::string out;
  for (const auto& token : tokens) {
    if (!out.empty()) out += '-';
    switch (token.kind) {
      case TokenKind::Signal: out += "S"; break;
      case TokenKind::Gain: out += "G"; break;
      case TokenKind::Camera: out += "CAM"; break;
      case TokenKind::Steps: out += "Ax" + std::to_string(token.steps); break;
    }
  }
  return out;
}

namespace {

bool contains(const std::vector<ArchToken>& tokens, TokenKind kind) {
  for (const auto& t : tokens) {
    if (t.kind == kind) return true;
  }
  return false;
}

}  // namespace

bool ArchitectureSpec::has_signal() const { return contains(tokens, TokenKind::Signal); }
bool ArchitectureSpec::has_gain() const { return contains(tokens, TokenKind::Gain); }
bool ArchitectureSpec::has_camera() const { return contains(tokens, TokenKind::Camera); }

int ArchitectureSpec::total_steps() const {
  int total = 0;
  for (const auto& t : tokens) {
    if (t.kind == TokenKind::Steps) total += t.steps;
  }
  return total;
}

}  // namespace nflow
