#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

// The stock listen backlog of 5 drops connections under bursts (each dropped
// SYN costs the client a full retransmission timeout before it connects);
// size it for burst arrival instead.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 64
#endif
#include "httplib.h"
#include "json.hpp"
#include "sface/embedding.hpp"
#include "sface/errors.hpp"
#include "sface/gallery.hpp"
#include "sface/motion.hpp"
#include "sface/orl.hpp"
#include "sface/pgm.hpp"
#include "sface/presence.hpp"
#include "sface/util.hpp"
#include "sface/workqueue.hpp"

namespace sface {

/// Turns a preprocessed face into its embedding. Injected so the HTTP layer
/// can be exercised without a trained network.
using Embedder = std::function<Embedding(const data::FaceImage&)>;

struct DetectBox {
  int x = 0, y = 0, w = 0, h = 0;
};

/// Locates the face in a raw frame, or nothing when no face is present.
using Detector = std::function<std::optional<DetectBox>(const data::RawImage&)>;

/// Default detector: treats the whole frame as the face region.
inline Detector full_frame_detector() {
  return [](const data::RawImage& img) -> std::optional<DetectBox> {
    return DetectBox{0, 0, static_cast<int>(img.width), static_cast<int>(img.height)};
  };
}

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 = bind any free port
  std::size_t queue_capacity = 64;
  std::size_t workers = 1;
  std::size_t top_n = 3;
  float min_score = 0.5f;  // below or at this, a match is not "recognized"
  std::size_t pool_threads = 32;
  std::string activity_log;  // JSONL file; empty disables logging
  PresenceConfig presence;
};

/// Builds a config from parsed key=value pairs; unknown keys and malformed
/// values are format errors so typos fail loudly.
inline ServiceConfig service_config_from_kv(const std::map<std::string, std::string>& kv) {
  ServiceConfig cfg;
  auto to_int = [](const std::string& key, const std::string& v, long long lo, long long hi) {
    try {
      std::size_t used = 0;
      const long long n = std::stoll(v, &used);
      if (used != v.size() || n < lo || n > hi) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw FormatError("config: bad value for " + key + ": \"" + v + "\"");
    }
  };
  for (const auto& [key, value] : kv) {
    if (key == "host") cfg.host = value;
    else if (key == "port") cfg.port = static_cast<int>(to_int(key, value, 0, 65535));
    else if (key == "capacity") cfg.queue_capacity = static_cast<std::size_t>(to_int(key, value, 1, 1 << 20));
    else if (key == "workers") cfg.workers = static_cast<std::size_t>(to_int(key, value, 1, 4096));
    else if (key == "top_n") cfg.top_n = static_cast<std::size_t>(to_int(key, value, 1, 1 << 20));
    else if (key == "pool_threads") cfg.pool_threads = static_cast<std::size_t>(to_int(key, value, 1, 4096));
    else if (key == "activity_log") cfg.activity_log = value;
    else if (key == "min_score") {
      try {
        std::size_t used = 0;
        cfg.min_score = std::stof(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw FormatError("config: bad value for min_score: \"" + value + "\"");
      }
    } else if (key == "slots") cfg.presence.slot_count = static_cast<std::size_t>(to_int(key, value, 1, 4096));
    else if (key == "block_ms") cfg.presence.block_time_ms = to_int(key, value, 1, INT64_MAX);
    else if (key == "display_ms") cfg.presence.display_time_ms = to_int(key, value, 1, INT64_MAX);
    else if (key == "hold_ms") cfg.presence.initial_hold_ms = to_int(key, value, 1, INT64_MAX);
    else if (key == "pending_ms") cfg.presence.pending_show_ms = to_int(key, value, 1, INT64_MAX);
    else throw FormatError("config: unknown key \"" + key + "\"");
  }
  cfg.presence.min_score = cfg.min_score;
  return cfg;
}

/// Fan-out buffer for server-sent events: keeps a bounded replay window and
/// wakes pollers as events arrive.
class EventBus {
 public:
  void publish(std::string line) {
    {
      std::lock_guard lock(mu_);
      events_.emplace_back(next_seq_++, std::move(line));
      while (events_.size() > kKeep) events_.pop_front();
    }
    cv_.notify_all();
  }

  std::uint64_t head() const {
    std::lock_guard lock(mu_);
    return next_seq_;
  }

  /// Events with sequence >= cursor, advancing the cursor; waits up to
  /// `wait` for the first one.
  std::vector<std::string> poll(std::uint64_t& cursor, std::chrono::milliseconds wait) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] { return next_seq_ > cursor; });
    std::vector<std::string> out;
    for (const auto& [seq, line] : events_)
      if (seq >= cursor) out.push_back(line);
    cursor = next_seq_;
    return out;
  }

 private:
  static constexpr std::size_t kKeep = 256;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::pair<std::uint64_t, std::string>> events_;
  std::uint64_t next_seq_ = 0;
};

/**
 * @brief HTTP face-recognition service.
 *
 * Endpoints:
 *   POST /register   {"user_id", "image_b64"}      -> enroll a face
 *   POST /recognize  {"image_b64"}                 -> top matches for a probe
 *   POST /postUid    form uid1..3 / value1..3      -> stash user info pairs
 *   GET  /getUinfo   [?uid=...]                    -> stored pairs
 *   GET  /healthz                                  -> {"status","queue_depth"}
 *   GET  /events     [?max_events=N&timeout_ms=M]  -> live event stream (SSE)
 *
 * Recognition work runs on a bounded queue with its own workers; when the
 * queue is full the request is answered 503 with {"retryable": true} instead
 * of queueing without bound. Health and info endpoints never touch the queue
 * or the embedder, so they stay fast regardless of recognition load.
 * Accepted recognitions above the score threshold feed the presence tracker,
 * whose display changes stream out over /events.
 */
class RecognitionService {
 public:
  explicit RecognitionService(ServiceConfig cfg, Embedder embedder,
                              Detector detector = full_frame_detector(),
                              std::function<std::int64_t()> clock = util::steady_clock_ms)
      : cfg_(std::move(cfg)),
        embedder_(std::move(embedder)),
        detector_(std::move(detector)),
        clock_(std::move(clock)),
        queue_(cfg_.queue_capacity, cfg_.workers),
        presence_(cfg_.presence) {
    if (!embedder_) throw std::invalid_argument("service: embedder is required");
    if (!detector_) throw std::invalid_argument("service: detector is required");
    if (!clock_) throw std::invalid_argument("service: clock is required");
    if (!cfg_.activity_log.empty()) {
      log_.open(cfg_.activity_log, std::ios::app);
      if (!log_) throw FormatError("cannot open activity log: " + cfg_.activity_log);
    }
    setup_routes();
  }

  ~RecognitionService() { stop(); }

  RecognitionService(const RecognitionService&) = delete;
  RecognitionService& operator=(const RecognitionService&) = delete;

  /// Bind and serve in a background thread; returns the bound port.
  int start() {
    if (server_thread_.joinable()) throw std::logic_error("service: already started");
    server_.new_task_queue = [n = cfg_.pool_threads] { return new httplib::ThreadPool(n); };
    if (cfg_.port == 0) {
      port_ = server_.bind_to_any_port(cfg_.host);
      if (port_ < 0) throw std::runtime_error("service: cannot bind to " + cfg_.host);
    } else {
      if (!server_.bind_to_port(cfg_.host, cfg_.port))
        throw std::runtime_error("service: cannot bind to " + cfg_.host + ":" +
                                 std::to_string(cfg_.port));
      port_ = cfg_.port;
    }
    server_thread_ = std::thread([this] { server_.listen_after_bind(); });
    while (!server_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return port_;
  }

  /// Stop serving and drain the recognition queue. Idempotent.
  void stop() {
    if (stopping_.exchange(true)) {
      if (server_thread_.joinable()) server_thread_.join();
      return;
    }
    if (server_thread_.joinable()) {
      server_.stop();
      server_thread_.join();
    }
    queue_.stop();
  }

  int port() const { return port_; }
  Gallery& gallery() { return gallery_; }
  WorkQueue::Counters counters() const { return queue_.counters(); }
  std::size_t queue_depth() const { return queue_.queue_depth(); }

 private:
  using json = nlohmann::json;

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void log_activity(json entry) {
    if (!log_.is_open()) return;
    entry["ts"] = util::wall_clock_ms();
    std::lock_guard lock(log_mu_);
    log_ << entry.dump() << '\n';
    log_.flush();
  }

  /// Decodes the transported image and locates the face. On failure the
  /// response is already filled and nullopt is returned.
  std::optional<std::pair<data::RawImage, DetectBox>> decode_frame(const json& body,
                                                                   httplib::Response& res) {
    if (!body.contains("image_b64") || !body["image_b64"].is_string()) {
      reply(res, 400, {{"error", "invalid_request"}, {"detail", "image_b64 is required"}});
      return std::nullopt;
    }
    data::RawImage raw;
    try {
      const auto bytes = util::base64_decode(body["image_b64"].get<std::string>());
      raw = data::decode_pgm(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                             "request image");
    } catch (const FormatError& e) {
      reply(res, 422, {{"error", "bad_image"}, {"detail", e.what()}});
      return std::nullopt;
    }
    const auto box = detector_(raw);
    if (!box) {
      reply(res, 422, {{"error", "no_face"}});
      log_activity({{"event", "no_face"}});
      return std::nullopt;
    }
    return std::make_pair(std::move(raw), *box);
  }

  Embedding run_embedder(const data::FaceImage& face) {
    std::lock_guard lock(embed_mu_);
    return embedder_(face);
  }

  void setup_routes() {
    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}, {"queue_depth", queue_.queue_depth()}});
    });

    server_.Post("/register", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.contains("user_id") || !body["user_id"].is_string()) {
        reply(res, 400, {{"error", "invalid_request"}, {"detail", "user_id is required"}});
        return;
      }
      const std::string user_id = body["user_id"].get<std::string>();
      const auto frame = decode_frame(body, res);
      if (!frame) return;
      try {
        const data::FaceImage face = data::preprocess(frame->first);
        const Embedding emb = run_embedder(face);
        const std::size_t index = gallery_.enroll(user_id, emb, util::wall_clock_ms());
        log_activity({{"event", "register"}, {"user_id", user_id}, {"index", index}});
        reply(res, 200, {{"user_id", user_id}, {"index", index}, {"gallery_size", gallery_.size()}});
      } catch (const std::invalid_argument& e) {
        reply(res, 400, {{"error", "invalid_request"}, {"detail", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", "internal"}, {"detail", e.what()}});
      }
    });

    server_.Post("/recognize", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) {
        reply(res, 400, {{"error", "invalid_request"}, {"detail", "body must be JSON"}});
        return;
      }
      const auto frame = decode_frame(body, res);
      if (!frame) return;
      auto raw = std::make_shared<data::RawImage>(std::move(frame->first));
      const DetectBox box = frame->second;

      auto result = std::make_shared<std::promise<json>>();
      std::future<json> done = result->get_future();
      const bool accepted = queue_.submit([this, raw, box, result] {
        try {
          result->set_value(recognize_job(*raw, box));
        } catch (...) {
          result->set_exception(std::current_exception());
          throw;  // let the queue count the failure
        }
      });
      if (!accepted) {
        log_activity({{"event", "overload"}});
        reply(res, 503, {{"error", "overloaded"}, {"retryable", true}});
        return;
      }
      try {
        reply(res, 200, done.get());
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", "internal"}, {"detail", e.what()}});
      }
    });

    server_.Post("/postUid", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t stored = 0;
      {
        std::lock_guard lock(uinfo_mu_);
        for (int i = 1; i <= kMaxUidFields; ++i) {
          const std::string uid_key = "uid" + std::to_string(i);
          if (!req.has_param(uid_key)) continue;
          const std::string uid = req.get_param_value(uid_key);
          const std::string value_key = "value" + std::to_string(i);
          if (uid.empty() || !req.has_param(value_key)) {
            reply(res, 400,
                  {{"error", "invalid_request"},
                   {"detail", uid_key + " needs a non-empty uid and a " + value_key}});
            return;
          }
          uinfo_[uid] = req.get_param_value(value_key);
          ++stored;
        }
      }
      if (stored == 0) {
        reply(res, 400, {{"error", "invalid_request"}, {"detail", "no uid/value pairs"}});
        return;
      }
      log_activity({{"event", "post_uid"}, {"stored", stored}});
      reply(res, 200, {{"stored", stored}});
    });

    server_.Get("/getUinfo", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(uinfo_mu_);
      if (req.has_param("uid")) {
        const std::string uid = req.get_param_value("uid");
        const auto it = uinfo_.find(uid);
        if (it == uinfo_.end()) {
          reply(res, 404, {{"error", "unknown_uid"}, {"uid", uid}});
          return;
        }
        reply(res, 200, {{"uid", uid}, {"value", it->second}});
        return;
      }
      json entries = json::object();
      for (const auto& [uid, value] : uinfo_) entries[uid] = value;
      reply(res, 200, {{"entries", entries}});
    });

    server_.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      struct StreamState {
        std::uint64_t cursor = 0;
        std::size_t emitted = 0;
        std::size_t max_events = 0;  // 0 = unbounded
        std::chrono::steady_clock::time_point deadline;
        bool greeted = false;
      };
      auto state = std::make_shared<StreamState>();
      state->cursor = bus_.head();
      if (req.has_param("max_events"))
        state->max_events = static_cast<std::size_t>(
            std::strtoull(req.get_param_value("max_events").c_str(), nullptr, 10));
      long long timeout_ms = 30000;
      if (req.has_param("timeout_ms"))
        timeout_ms = std::strtoll(req.get_param_value("timeout_ms").c_str(), nullptr, 10);
      state->deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);

      res.set_chunked_content_provider(
          "text/event-stream", [this, state](std::size_t, httplib::DataSink& sink) -> bool {
            if (!state->greeted) {
              state->greeted = true;
              const std::string hello = ": stream open\n\n";
              if (!sink.write(hello.data(), hello.size())) return false;
            }
            if (stopping_.load()) {
              sink.done();
              return false;
            }
            if (std::chrono::steady_clock::now() >= state->deadline) {
              sink.done();
              return false;
            }
            const auto lines = bus_.poll(state->cursor, std::chrono::milliseconds(100));
            for (const auto& line : lines) {
              const std::string frame = "data: " + line + "\n\n";
              if (!sink.write(frame.data(), frame.size())) return false;
              ++state->emitted;
              if (state->max_events && state->emitted >= state->max_events) {
                sink.done();
                return false;
              }
            }
            return true;
          });
    });
  }

  json recognize_job(const data::RawImage& raw, const DetectBox& box) {
    const data::FaceImage face = data::preprocess(raw);
    const Embedding emb = run_embedder(face);
    const auto hits = gallery_.top_k(emb, cfg_.top_n);
    json matches = json::array();
    for (const auto& h : hits)
      matches.push_back({{"user_id", h.user_id},
                         {"distance", h.distance},
                         {"score", h.score},
                         {"index", h.index}});
    const bool recognized = !hits.empty() && hits.front().score > cfg_.min_score;
    json out = {{"matches", matches},
                {"recognized", recognized},
                {"face", {{"x", box.x}, {"y", box.y}, {"w", box.w}, {"h", box.h}}}};
    json log_entry = {{"event", "recognize"}, {"recognized", recognized}};
    if (recognized) {
      const auto& best = hits.front();
      out["best"] = {{"user_id", best.user_id}, {"score", best.score}};
      log_entry["user_id"] = best.user_id;
      log_entry["score"] = best.score;
      publish_event({{"kind", "recognition"},
                     {"user_id", best.user_id},
                     {"score", best.score},
                     {"distance", best.distance}});
      std::vector<PresenceEvent> changes;
      {
        std::lock_guard lock(presence_mu_);
        changes = presence_.on_candidate(clock_(), best.user_id, best.score);
      }
      for (const auto& ev : changes)
        publish_event({{"kind", "presence"},
                       {"time", ev.time},
                       {"slot", ev.slot},
                       {"uid", ev.uid.empty() ? json(nullptr) : json(ev.uid)}});
    }
    log_activity(std::move(log_entry));
    return out;
  }

  void publish_event(const json& e) { bus_.publish(e.dump()); }

  static constexpr int kMaxUidFields = 3;

  ServiceConfig cfg_;
  Embedder embedder_;
  Detector detector_;
  std::function<std::int64_t()> clock_;
  Gallery gallery_;
  WorkQueue queue_;
  PresenceTracker presence_;
  std::mutex presence_mu_;
  std::mutex embed_mu_;
  std::mutex uinfo_mu_;
  std::map<std::string, std::string> uinfo_;
  EventBus bus_;
  std::ofstream log_;
  std::mutex log_mu_;
  httplib::Server server_;
  std::thread server_thread_;
  std::atomic<bool> stopping_{false};
  int port_ = -1;
};

}  // namespace sface
