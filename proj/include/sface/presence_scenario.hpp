#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sface/errors.hpp"
#include "sface/presence.hpp"

namespace sface {

inline std::ostream& operator<<(std::ostream& os, const PresenceEvent& e) {
  return os << "{t=" << e.time << " slot=" << e.slot << " uid=" << (e.uid.empty() ? "-" : e.uid)
            << "}";
}

/// One input to a scripted presence run: a recognition candidate or a bare
/// clock advance.
struct PresenceStep {
  std::int64_t time = 0;
  bool is_tick = false;
  std::string uid;   // candidate only
  float score = 0;   // candidate only
};

/**
 * @brief A scripted presence-tracker session: inputs plus the exact expected
 * event stream.
 *
 * Text format, one statement per line ('#' starts a comment):
 *
 *   CFG <key> <value>        optional, before any timed line; keys: slots,
 *                            block_ms, display_ms, hold_ms, pending_ms,
 *                            min_score
 *   <t> CAND <uid> <score>   recognition candidate at time t
 *   <t> TICK                 advance the clock to t
 *   <t> EV <slot> <uid|->    expected display change ("-" = slot wiped)
 *
 * EV lines list the complete expected event stream in emission order; their
 * position between input lines is purely cosmetic.
 */
struct PresenceScenario {
  PresenceConfig config;
  std::vector<PresenceStep> steps;
  std::vector<PresenceEvent> expected;
};

inline PresenceScenario parse_presence_scenario(std::istream& is) {
  PresenceScenario sc;
  std::string line;
  std::size_t lineno = 0;
  bool saw_timed = false;
  auto fail = [&](const std::string& msg) -> FormatError {
    return FormatError("scenario line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    if (tok[0] == "CFG") {
      if (saw_timed) throw fail("CFG must precede all timed lines");
      if (tok.size() != 3) throw fail("CFG needs a key and a value");
      try {
        const std::string& key = tok[1];
        if (key == "slots") sc.config.slot_count = std::stoul(tok[2]);
        else if (key == "block_ms") sc.config.block_time_ms = std::stoll(tok[2]);
        else if (key == "display_ms") sc.config.display_time_ms = std::stoll(tok[2]);
        else if (key == "hold_ms") sc.config.initial_hold_ms = std::stoll(tok[2]);
        else if (key == "pending_ms") sc.config.pending_show_ms = std::stoll(tok[2]);
        else if (key == "min_score") sc.config.min_score = std::stof(tok[2]);
        else throw fail("unknown CFG key \"" + key + "\"");
      } catch (const FormatError&) {
        throw;
      } catch (const std::exception&) {
        throw fail("bad CFG value \"" + tok[2] + "\"");
      }
      continue;
    }

    std::int64_t t = 0;
    try {
      std::size_t used = 0;
      t = std::stoll(tok[0], &used);
      if (used != tok[0].size()) throw std::invalid_argument(tok[0]);
    } catch (const std::exception&) {
      throw fail("expected a timestamp, got \"" + tok[0] + "\"");
    }
    saw_timed = true;
    if (tok.size() < 2) throw fail("timestamp without a statement");
    const std::string& kind = tok[1];
    if (kind == "TICK") {
      if (tok.size() != 2) throw fail("TICK takes no arguments");
      sc.steps.push_back({t, true, "", 0});
    } else if (kind == "CAND") {
      if (tok.size() != 4) throw fail("CAND needs a uid and a score");
      float score = 0;
      try {
        score = std::stof(tok[3]);
      } catch (const std::exception&) {
        throw fail("bad score \"" + tok[3] + "\"");
      }
      sc.steps.push_back({t, false, tok[2], score});
    } else if (kind == "EV") {
      if (tok.size() != 4) throw fail("EV needs a slot and a uid (or -)");
      std::size_t slot = 0;
      try {
        slot = std::stoul(tok[2]);
      } catch (const std::exception&) {
        throw fail("bad slot \"" + tok[2] + "\"");
      }
      sc.expected.push_back({t, slot, tok[3] == "-" ? std::string() : tok[3]});
    } else {
      throw fail("unknown statement \"" + kind + "\"");
    }
  }
  return sc;
}

inline PresenceScenario load_presence_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open scenario: " + path);
  try {
    return parse_presence_scenario(is);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// Replay the scripted inputs and return every event the tracker emitted.
inline std::vector<PresenceEvent> run_presence_scenario(const PresenceScenario& sc) {
  PresenceTracker tracker(sc.config);
  std::vector<PresenceEvent> actual;
  for (const auto& step : sc.steps) {
    const auto events =
        step.is_tick ? tracker.tick(step.time) : tracker.on_candidate(step.time, step.uid, step.score);
    actual.insert(actual.end(), events.begin(), events.end());
  }
  return actual;
}

}  // namespace sface
