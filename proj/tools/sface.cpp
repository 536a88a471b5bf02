// Command-line front end for the face recognition toolkit: training,
// evaluation, gallery management, the HTTP service, and a motion-gated
// capture client.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime error
// (diverged training, failed checks, unreachable server, overload).
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sface/gradcheck.hpp"
#include "sface/motion.hpp"
#include "sface/service.hpp"
#include "sface/siamese.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_stop{false};
void handle_signal(int) { g_stop.store(true); }

sface::Embedding embed_file(sface::SiameseNetwork& net, const std::string& image_path) {
  const sface::data::RawImage raw = sface::data::load_pgm(image_path);
  return sface::embed(net, sface::data::preprocess(raw));
}

sface::Gallery load_gallery_if_present(const std::string& path) {
  if (std::filesystem::exists(path)) return sface::Gallery::load_file(path);
  return sface::Gallery();
}

int cmd_train(const std::string& data_dir, const std::string& out,
              const std::string& manifest, sface::TrainConfig cfg, bool as_json) {
  const auto corpus = sface::data::load_corpus(data_dir);
  const auto split = sface::data::split_corpus(corpus, cfg.seed);
  if (!manifest.empty()) sface::data::write_manifest(split, manifest);
  auto net = sface::build_siamese_network(cfg.seed);
  const auto reports = sface::train(net, split, cfg, [&](const std::string& line) {
    if (!as_json) std::cout << line << std::endl;  // flush so progress survives a pipe
  });
  sface::save_checkpoint(net, out);
  if (as_json) {
    json epochs = json::array();
    for (const auto& r : reports) epochs.push_back({{"epoch", r.epoch}, {"loss", r.loss}});
    std::cout << json{{"model", out},
                      {"train_images", split.train.size()},
                      {"test_images", split.test.size()},
                      {"epochs", epochs}}
                     .dump()
              << "\n";
  } else {
    std::cout << "model written to " << out << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& data_dir, const std::string& model, std::size_t pairs,
             std::uint32_t seed, bool as_json) {
  const auto corpus = sface::data::load_corpus(data_dir);
  const auto split = sface::data::split_corpus(corpus, seed);
  auto net = sface::load_checkpoint(model);
  const auto m = sface::evaluate(net, split.test, pairs, seed);
  if (as_json) {
    std::cout << json{{"pairs", m.pairs},
                      {"accuracy", m.accuracy},
                      {"threshold", m.threshold},
                      {"median_genuine", m.median_genuine},
                      {"median_impostor", m.median_impostor}}
                     .dump()
              << "\n";
  } else {
    std::cout << "pairs:            " << m.pairs << "\n"
              << "accuracy:         " << m.accuracy << "\n"
              << "threshold:        " << m.threshold << "\n"
              << "median genuine:   " << m.median_genuine << "\n"
              << "median impostor:  " << m.median_impostor << "\n";
  }
  return kExitOk;
}

int cmd_enroll(const std::string& model, const std::string& gallery_path,
               const std::string& user, const std::string& image, bool as_json) {
  auto net = sface::load_checkpoint(model);
  sface::Gallery gallery = load_gallery_if_present(gallery_path);
  const auto emb = embed_file(net, image);
  const std::size_t index = gallery.enroll(user, emb, sface::util::wall_clock_ms());
  gallery.save_file(gallery_path);
  if (as_json)
    std::cout << json{{"user_id", user}, {"index", index}, {"gallery_size", gallery.size()}}.dump()
              << "\n";
  else
    std::cout << "enrolled " << user << " as record " << index << " (" << gallery.size()
              << " total)\n";
  return kExitOk;
}

int cmd_match(const std::string& model, const std::string& gallery_path,
              const std::string& image, std::size_t top, bool as_json) {
  auto net = sface::load_checkpoint(model);
  const sface::Gallery gallery = sface::Gallery::load_file(gallery_path);
  const auto emb = embed_file(net, image);
  const auto hits = gallery.top_k(emb, top);
  if (as_json) {
    json matches = json::array();
    for (const auto& h : hits)
      matches.push_back({{"user_id", h.user_id},
                         {"distance", h.distance},
                         {"score", h.score},
                         {"index", h.index}});
    std::cout << json{{"matches", matches}}.dump() << "\n";
  } else if (hits.empty()) {
    std::cout << "gallery is empty\n";
  } else {
    for (const auto& h : hits)
      std::cout << h.user_id << "  distance=" << h.distance << "  score=" << h.score << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(bool as_json) {
  const auto results = sface::nn::run_gradient_checks();
  bool all_pass = true;
  json rows = json::array();
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    if (as_json)
      rows.push_back({{"name", r.name}, {"max_rel_error", r.max_rel_error}, {"pass", r.pass}});
    else
      std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_error="
                << r.max_rel_error << "\n";
  }
  if (as_json) std::cout << json{{"checks", rows}, {"all_pass", all_pass}}.dump() << "\n";
  return all_pass ? kExitOk : kExitRuntime;
}

int cmd_serve(const std::string& config_path, const std::string& model,
              const std::string& gallery_path, const std::string& host, int port) {
  sface::ServiceConfig cfg;
  if (!config_path.empty())
    cfg = sface::service_config_from_kv(sface::util::parse_kv_file(config_path));
  if (!host.empty()) cfg.host = host;
  if (port >= 0) cfg.port = port;

  auto net = std::make_shared<sface::SiameseNetwork>(sface::load_checkpoint(model));
  sface::Embedder embedder = [net](const sface::data::FaceImage& face) {
    return sface::embed(*net, face);
  };
  sface::RecognitionService service(cfg, std::move(embedder));
  if (!gallery_path.empty() && std::filesystem::exists(gallery_path)) {
    const sface::Gallery loaded = sface::Gallery::load_file(gallery_path);
    for (const auto& r : loaded.snapshot())
      service.gallery().enroll(r.user_id, r.embedding, r.enrolled_at_ms);
  }

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  const int bound = service.start();
  std::cout << "listening on " << cfg.host << ":" << bound << "\n" << std::flush;
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  if (!gallery_path.empty()) service.gallery().save_file(gallery_path);
  return kExitOk;
}

int cmd_client(const std::string& server, const std::string& frames_dir, double threshold,
               int retries, int cooldown_ms, bool as_json) {
  const auto colon = server.rfind(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("--server", "expected host:port");
  const std::string host = server.substr(0, colon);
  const int port = std::stoi(server.substr(colon + 1));

  std::vector<std::filesystem::path> frames;
  for (const auto& entry : std::filesystem::directory_iterator(frames_dir))
    if (entry.path().extension() == ".pgm") frames.push_back(entry.path());
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw sface::FormatError("no .pgm frames in " + frames_dir);

  httplib::Client cli(host, port);
  cli.set_read_timeout(30, 0);

  std::size_t sent = 0, skipped = 0, recognized = 0, failed = 0;
  sface::data::RawImage prev;
  bool have_prev = false;
  for (const auto& path : frames) {
    const sface::data::RawImage frame = sface::data::load_pgm(path);
    if (have_prev && !sface::has_motion(prev, frame, threshold)) {
      ++skipped;
      prev = frame;
      if (!as_json) std::cout << path.filename().string() << ": no motion, skipped\n";
      continue;
    }
    prev = frame;
    have_prev = true;

    const json body{{"image_b64", sface::util::base64_encode(sface::data::encode_pgm(frame))}};
    httplib::Result res;
    for (int attempt = 0; attempt <= retries; ++attempt) {
      res = cli.Post("/recognize", body.dump(), "application/json");
      if (res && res->status == 503 && attempt < retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cooldown_ms));
        continue;
      }
      break;
    }
    if (!res) throw std::runtime_error("server unreachable: " + server);
    ++sent;
    if (res->status != 200) {
      ++failed;
      if (!as_json)
        std::cout << path.filename().string() << ": HTTP " << res->status << " " << res->body
                  << "\n";
      continue;
    }
    const json out = json::parse(res->body);
    if (out["recognized"].get<bool>()) ++recognized;
    if (as_json) {
      json line = out;
      line["frame"] = path.filename().string();
      std::cout << line.dump() << "\n";
    } else if (out["recognized"].get<bool>()) {
      std::cout << path.filename().string() << ": " << out["best"]["user_id"].get<std::string>()
                << " (score " << out["best"]["score"].get<double>() << ")\n";
    } else {
      std::cout << path.filename().string() << ": not recognized\n";
    }
  }
  if (!as_json)
    std::cout << "frames: " << frames.size() << " sent: " << sent << " skipped: " << skipped
              << " recognized: " << recognized << " failed: " << failed << "\n";
  else
    std::cout << json{{"frames", frames.size()},
                      {"sent", sent},
                      {"skipped", skipped},
                      {"recognized", recognized},
                      {"failed", failed}}
                     .dump()
              << "\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_export_gallery(const std::string& gallery_path, const std::string& csv_path) {
  const sface::Gallery gallery = sface::Gallery::load_file(gallery_path);
  gallery.export_csv_file(csv_path);
  std::cout << "wrote " << gallery.size() << " records to " << csv_path << "\n";
  return kExitOk;
}

int cmd_import_gallery(const std::string& csv_path, const std::string& gallery_path) {
  const sface::Gallery gallery = sface::Gallery::import_csv_file(csv_path);
  gallery.save_file(gallery_path);
  std::cout << "wrote " << gallery.size() << " records to " << gallery_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese-embedding face recognition toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // let subcommands accept the global --json flag
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable JSON output");

  // train
  auto* train = app.add_subcommand("train", "train an embedding model on a face corpus");
  std::string data_dir, model_out = "model.bin", manifest;
  sface::TrainConfig tcfg;
  train->add_option("--data", data_dir, "corpus root (s<N>/<M>.pgm layout)")->required();
  train->add_option("--out", model_out, "checkpoint output path");
  train->add_option("--manifest", manifest, "write the train/test split manifest here");
  train->add_option("--epochs", tcfg.epochs, "training epochs");
  train->add_option("--batch", tcfg.batch_size, "pairs per batch");
  train->add_option("--lr", tcfg.learning_rate, "learning rate");
  train->add_option("--momentum", tcfg.momentum, "SGD momentum");
  train->add_option("--margin", tcfg.margin, "contrastive loss margin");
  train->add_option("--seed", tcfg.seed, "split/init/sampling seed");

  // eval
  auto* eval = app.add_subcommand("eval", "measure verification quality on the held-out split");
  std::string eval_model;
  std::size_t eval_pairs = 500;
  std::uint32_t eval_seed = 1;
  eval->add_option("--data", data_dir, "corpus root")->required();
  eval->add_option("--model", eval_model, "checkpoint path")->required();
  eval->add_option("--pairs", eval_pairs, "number of evaluation pairs");
  eval->add_option("--seed", eval_seed, "split/sampling seed");

  // enroll
  auto* enroll = app.add_subcommand("enroll", "add a face to a gallery file");
  std::string gallery_path, user_id, image_path;
  enroll->add_option("--model", eval_model, "checkpoint path")->required();
  enroll->add_option("--gallery", gallery_path, "gallery file (created if missing)")->required();
  enroll->add_option("--user", user_id, "user id to enroll")->required();
  enroll->add_option("--image", image_path, "PGM face image")->required();

  // match
  auto* match = app.add_subcommand("match", "rank gallery users against a probe image");
  std::size_t top_k = 3;
  match->add_option("--model", eval_model, "checkpoint path")->required();
  match->add_option("--gallery", gallery_path, "gallery file")->required();
  match->add_option("--image", image_path, "PGM probe image")->required();
  match->add_option("--top", top_k, "matches to report");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP recognition service");
  std::string config_path, serve_host;
  int serve_port = -1;
  if (const char* env = std::getenv("SFACE_CONFIG")) config_path = env;
  serve->add_option("--config", config_path,
                    "key=value config file (default: $SFACE_CONFIG if set)");
  serve->add_option("--model", eval_model, "checkpoint path")->required();
  serve->add_option("--gallery", gallery_path,
                    "gallery file to preload and save back on shutdown");
  serve->add_option("--host", serve_host, "bind address (overrides config)");
  serve->add_option("--port", serve_port, "port, 0 = any free (overrides config)");

  // client
  auto* client = app.add_subcommand("client", "send motion-gated frames to a running service");
  std::string server_addr, frames_dir;
  double motion_threshold = sface::kMotionThreshold;
  int retries = 3, cooldown_ms = 2000;
  client->add_option("--server", server_addr, "service address host:port")->required();
  client->add_option("--frames", frames_dir, "directory of PGM frames")->required();
  client->add_option("--motion-threshold", motion_threshold,
                     "mean absolute pixel change in [0,1] needed to send a frame");
  client->add_option("--retries", retries, "retry budget for overloaded (503) responses");
  client->add_option("--cooldown-ms", cooldown_ms, "wait between overload retries");

  // gradcheck
  auto* gradcheck =
      app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");

  // export-gallery / import-gallery
  auto* exportg = app.add_subcommand("export-gallery", "write a gallery file as CSV");
  std::string csv_path;
  exportg->add_option("--gallery", gallery_path, "gallery file")->required();
  exportg->add_option("--csv", csv_path, "CSV output path")->required();
  auto* importg = app.add_subcommand("import-gallery", "build a gallery file from CSV");
  importg->add_option("--csv", csv_path, "CSV input path")->required();
  importg->add_option("--gallery", gallery_path, "gallery output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(data_dir, model_out, manifest, tcfg, as_json);
    if (*eval) return cmd_eval(data_dir, eval_model, eval_pairs, eval_seed, as_json);
    if (*enroll) return cmd_enroll(eval_model, gallery_path, user_id, image_path, as_json);
    if (*match) return cmd_match(eval_model, gallery_path, image_path, top_k, as_json);
    if (*serve) return cmd_serve(config_path, eval_model, gallery_path, serve_host, serve_port);
    if (*client)
      return cmd_client(server_addr, frames_dir, motion_threshold, retries, cooldown_ms, as_json);
    if (*gradcheck) return cmd_gradcheck(as_json);
    if (*exportg) return cmd_export_gallery(gallery_path, csv_path);
    if (*importg) return cmd_import_gallery(csv_path, gallery_path);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const sface::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
