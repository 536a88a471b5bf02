#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace sface {

/// One change to the display: a user id appearing in a slot, or the slot
/// being wiped (empty uid). Events carry the virtual time at which the
/// change logically happened, which for timer-driven changes can precede
/// the call that drained the timer.
struct PresenceEvent {
  std::int64_t time = 0;
  std::size_t slot = 0;
  std::string uid;  // empty = slot cleared

  bool operator==(const PresenceEvent&) const = default;
};

enum class SlotState {
  Empty,
  OnScreen,        // shown, within the initial hold; cannot be replaced yet
  Replaceable,     // shown, hold elapsed; a new candidate may take the slot
  WaitForPush,     // wiped for an incoming candidate, brief blank gap
  PickedUpFromWL,  // wiped for an incoming wait-listed user, same gap
};

struct PresenceConfig {
  std::size_t slot_count = 4;
  std::int64_t block_time_ms = 10000;    // re-show suppression per user
  std::int64_t display_time_ms = 5000;   // total on-screen time per appearance
  std::int64_t initial_hold_ms = 1000;   // grace period before replacement
  std::int64_t pending_show_ms = 500;    // blank gap between wipe and show
  float min_score = 0.5f;                // candidates at or below are ignored
};

/**
 * @brief Deterministic scheduler for the on-screen presence of recognized users.
 *
 * Recognized candidates claim display slots; each appearance is wiped after a
 * fixed display time, every accepted user is suppressed from re-appearing for
 * a block window, and a short hold after each show protects it from immediate
 * replacement. Time is virtual: every entry point takes `now` explicitly and
 * never reads a clock, so identical call sequences give identical event
 * streams. Due timers are drained (in `(time, slot, sequence)` order) before
 * any new candidate is considered, and emitted events are stamped with the
 * time the timer was due, not the time of the draining call.
 *
 * Placement policy for an accepted candidate: the first Empty slot shows it
 * immediately; otherwise the first Replaceable slot (by index) is wiped and
 * shows it after the blank gap; otherwise it joins a FIFO wait list. The
 * wait list is served only when a slot's initial hold expires — a slot that
 * merely finished its display time stays empty until a fresh candidate needs
 * it.
 */
class PresenceTracker {
 public:
  explicit PresenceTracker(const PresenceConfig& cfg = {}) : cfg_(cfg) {
    if (cfg.slot_count == 0)
      throw std::invalid_argument("presence: slot_count must be positive");
    if (cfg.block_time_ms <= 0 || cfg.display_time_ms <= 0 || cfg.initial_hold_ms <= 0 ||
        cfg.pending_show_ms <= 0)
      throw std::invalid_argument("presence: all durations must be positive");
    if (cfg.display_time_ms <= cfg.initial_hold_ms)
      throw std::invalid_argument("presence: display time must exceed the initial hold");
    if (!std::isfinite(cfg.min_score))
      throw std::invalid_argument("presence: min_score must be finite");
    slots_.resize(cfg.slot_count);
  }

  /// Feed one recognition result. Returns every display change it caused,
  /// including changes from timers that were already due.
  std::vector<PresenceEvent> on_candidate(std::int64_t now, const std::string& uid, float score) {
    if (uid.empty()) throw std::invalid_argument("presence: candidate uid must not be empty");
    advance_to(now);
    std::vector<PresenceEvent> events;
    drain(now, events);
    if (!(score > cfg_.min_score)) return events;  // also drops NaN scores
    if (blocks_.count(uid)) return events;
    blocks_[uid] = now + cfg_.block_time_ms;
    push_timer(now + cfg_.block_time_ms, cfg_.slot_count, TimerKind::BlockExpiry, uid, 0);
    place(now, uid, events);
    return events;
  }

  /// Advance virtual time, firing every timer due at or before `now`.
  std::vector<PresenceEvent> tick(std::int64_t now) {
    advance_to(now);
    std::vector<PresenceEvent> events;
    drain(now, events);
    return events;
  }

  std::size_t slot_count() const { return slots_.size(); }
  SlotState state(std::size_t slot) const { return at(slot).state; }
  const std::string& displayed_uid(std::size_t slot) const { return at(slot).uid; }
  std::size_t waitlist_size() const { return wait_.size(); }
  bool is_blocked(const std::string& uid) const { return blocks_.count(uid) != 0; }

 private:
  enum class TimerKind { BlockExpiry, InitialHold, PendingShow, SlotClear };

  struct Slot {
    SlotState state = SlotState::Empty;
    std::string uid;       // displayed while OnScreen/Replaceable
    std::string incoming;  // queued while WaitForPush/PickedUpFromWL
    std::uint64_t gen = 0; // bumped on every transition; stale timers no-op
  };

  struct Timer {
    std::int64_t time;
    std::size_t slot;  // slot_count for slot-less (block) timers
    std::uint64_t seq;
    TimerKind kind;
    std::string uid;
    std::uint64_t gen;

    bool operator>(const Timer& o) const {
      if (time != o.time) return time > o.time;
      if (slot != o.slot) return slot > o.slot;
      return seq > o.seq;
    }
  };

  void advance_to(std::int64_t now) {
    if (now < last_time_)
      throw std::invalid_argument("presence: time went backwards (" + std::to_string(now) +
                                  " after " + std::to_string(last_time_) + ")");
    last_time_ = now;
  }

  Slot& at(std::size_t slot) {
    if (slot >= slots_.size()) throw std::invalid_argument("presence: slot index out of range");
    return slots_[slot];
  }
  const Slot& at(std::size_t slot) const {
    if (slot >= slots_.size()) throw std::invalid_argument("presence: slot index out of range");
    return slots_[slot];
  }

  void push_timer(std::int64_t time, std::size_t slot, TimerKind kind, std::string uid,
                  std::uint64_t gen) {
    queue_.push(Timer{time, slot, seq_++, kind, std::move(uid), gen});
  }

  void show(std::int64_t time, std::size_t slot, const std::string& uid,
            std::vector<PresenceEvent>& events) {
    Slot& s = slots_[slot];
    events.push_back({time, slot, uid});
    s.state = SlotState::OnScreen;
    s.uid = uid;
    s.incoming.clear();
    ++s.gen;
    push_timer(time + cfg_.initial_hold_ms, slot, TimerKind::InitialHold, uid, s.gen);
  }

  void wipe_for(std::int64_t time, std::size_t slot, SlotState gap_state,
                const std::string& incoming, std::vector<PresenceEvent>& events) {
    Slot& s = slots_[slot];
    events.push_back({time, slot, ""});
    s.state = gap_state;
    s.uid.clear();
    s.incoming = incoming;
    ++s.gen;  // invalidates the displaced appearance's pending SlotClear
    push_timer(time + cfg_.pending_show_ms, slot, TimerKind::PendingShow, incoming, s.gen);
  }

  void place(std::int64_t now, const std::string& uid, std::vector<PresenceEvent>& events) {
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].state == SlotState::Empty) {
        show(now, i, uid, events);
        return;
      }
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].state == SlotState::Replaceable) {
        wipe_for(now, i, SlotState::WaitForPush, uid, events);
        return;
      }
    wait_.push_back(uid);
  }

  void drain(std::int64_t now, std::vector<PresenceEvent>& events) {
    while (!queue_.empty() && queue_.top().time <= now) {
      const Timer t = queue_.top();
      queue_.pop();
      fire(t, events);
    }
  }

  void fire(const Timer& t, std::vector<PresenceEvent>& events) {
    switch (t.kind) {
      case TimerKind::BlockExpiry: {
        auto it = blocks_.find(t.uid);
        if (it != blocks_.end() && it->second <= t.time) blocks_.erase(it);
        return;
      }
      case TimerKind::InitialHold: {
        Slot& s = slots_[t.slot];
        if (t.gen != s.gen || s.state != SlotState::OnScreen) return;
        if (!wait_.empty()) {
          const std::string next = wait_.front();
          wait_.pop_front();
          wipe_for(t.time, t.slot, SlotState::PickedUpFromWL, next, events);
        } else {
          s.state = SlotState::Replaceable;
          ++s.gen;
          push_timer(t.time + (cfg_.display_time_ms - cfg_.initial_hold_ms), t.slot,
                     TimerKind::SlotClear, s.uid, s.gen);
        }
        return;
      }
      case TimerKind::PendingShow: {
        Slot& s = slots_[t.slot];
        if (t.gen != s.gen ||
            (s.state != SlotState::WaitForPush && s.state != SlotState::PickedUpFromWL))
          return;
        show(t.time, t.slot, s.incoming, events);
        return;
      }
      case TimerKind::SlotClear: {
        Slot& s = slots_[t.slot];
        if (t.gen != s.gen || s.state != SlotState::Replaceable || s.uid != t.uid) return;
        events.push_back({t.time, t.slot, ""});
        s.state = SlotState::Empty;
        s.uid.clear();
        ++s.gen;
        return;
      }
    }
  }

  PresenceConfig cfg_;
  std::vector<Slot> slots_;
  std::deque<std::string> wait_;
  std::map<std::string, std::int64_t> blocks_;  // uid -> block expiry
  std::priority_queue<Timer, std::vector<Timer>, std::greater<Timer>> queue_;
  std::uint64_t seq_ = 0;
  std::int64_t last_time_ = std::numeric_limits<std::int64_t>::min();
};

}  // namespace sface
