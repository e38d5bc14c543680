// Copyright 2026 The speechbt Authors.
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

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "speechbt/backend/serve.hpp"
#include "speechbt/pipeline/run.hpp"

namespace fs = std::filesystem;
namespace pl = speechbt::pipeline;

namespace {

// Exit statuses.
constexpr int kOk = 0;
constexpr int kGated = 2;
constexpr int kStageFailed = 3;
constexpr int kConfigFailed = 4;

int mock_worker(const speechbt::backend::MockEngineConfig& cfg, const speechbt::backend::ServeOptions& opts) {
  std::ios::sync_with_stdio(false);
  speechbt::backend::MockEngine engine(cfg);
  const auto how = speechbt::backend::serve(std::cin, std::cout, engine, opts);
  if (how == speechbt::backend::ServeExit::kCrash) std::_Exit(86);
  return 0;
}

std::string self_exe(const char* argv0) {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) return p.string();
  return fs::absolute(argv0).string();
}

struct Common {
  std::string config;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> workers;
  bool force = false;
  std::string stop_after;
  std::optional<std::size_t> fault_after;
  std::string hours_csv, scatter_csv, wer_csv;
};

pl::RunConfig resolve_config(const Common& c) {
  pl::RunConfig cfg;
  if (!c.config.empty()) {
    cfg = pl::load_config(c.config);
  } else if (fs::exists(fs::path(c.run_dir) / "config.ini")) {
    cfg = pl::load_config(fs::path(c.run_dir) / "config.ini");
  } else {
    throw speechbt::Error(speechbt::ErrorCode::kConfigError,
                          "no --config given and " + c.run_dir + " holds no config.ini");
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.workers.empty()) cfg.worker_commands = c.workers;
  return cfg;
}

void write_error(const fs::path& run_dir, const std::string& code, const std::string& message) {
  std::error_code ec;
  if (!fs::is_directory(run_dir, ec)) return;
  try {
    speechbt::io::write_json(run_dir / "error.json", {{"code", code}, {"message", message}});
  } catch (...) {
  }
}

int run_pipeline(const Common& c, const char* argv0, std::optional<pl::Stage> only) {
  pl::RunConfig cfg;
  try {
    cfg = resolve_config(c);
  } catch (const std::exception& e) {
    std::cerr << "speechbt: " << e.what() << "\n";
    return kConfigFailed;
  }
  const fs::path run_dir = c.run_dir;
  std::error_code ec;
  fs::remove(run_dir / "error.json", ec);
  try {
    pl::RunOptions opts;
    opts.self_exe = self_exe(argv0);
    opts.fault_abort_after_batches = c.fault_after;
    if (!c.hours_csv.empty()) opts.imports.hours_csv = c.hours_csv;
    if (!c.scatter_csv.empty()) opts.imports.scatter_csv = c.scatter_csv;
    if (!c.wer_csv.empty()) opts.imports.wer_csv = c.wer_csv;
    pl::Pipeline p(std::move(cfg), run_dir, std::move(opts));
    pl::RunOutcome out;
    if (only) {
      out = p.run_one(*only, c.force);
    } else {
      std::optional<pl::Stage> stop;
      if (!c.stop_after.empty()) {
        stop = pl::parse_stage(c.stop_after);
        if (!stop) throw speechbt::Error(speechbt::ErrorCode::kConfigError, "unknown stage " + c.stop_after);
      }
      out = p.run_all(stop);
    }
    if (out.gated) {
      std::cerr << "speechbt: at least one language failed the intelligibility gate\n";
      return kGated;
    }
    return kOk;
  } catch (const speechbt::Error& e) {
    std::cerr << "speechbt: " << e.what() << "\n";
    if (e.code() == speechbt::ErrorCode::kConfigError) return kConfigFailed;
    write_error(run_dir, std::string(speechbt::error_code_name(e.code())), e.what());
    return kStageFailed;
  } catch (const std::exception& e) {
    std::cerr << "speechbt: " << e.what() << "\n";
    write_error(run_dir, "Internal", e.what());
    return kStageFailed;
  }
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration (defaults to <run-dir>/config.ini)");
  cmd->add_option("--run-dir", c.run_dir, "run directory")->required();
  cmd->add_option("--seed", c.seed, "override [run] seed");
  cmd->add_option("--workers", c.workers, "worker command, repeat for several (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speechbt: speech back-translation pipeline"};
  app.require_subcommand(1);

  Common common;
  std::vector<std::pair<CLI::App*, std::optional<pl::Stage>>> pipeline_cmds;
  for (const auto& s : pl::kStages) {
    auto* cmd = app.add_subcommand(std::string(s.command), "run the " + std::string(s.dir) + " stage");
    add_common(cmd, common);
    cmd->add_flag("--force", common.force, "redo the stage even if it completed");
    pipeline_cmds.emplace_back(cmd, s.stage);
  }
  auto* run = app.add_subcommand("run", "run every stage, resuming completed ones");
  add_common(run, common);
  run->add_option("--stop-after", common.stop_after)->group("");
  run->add_option("--fault-abort-after-batches", common.fault_after)->group("");
  pipeline_cmds.emplace_back(run, std::nullopt);
  for (auto* cmd : {run, app.get_subcommand("report")}) {
    cmd->add_option("--hours-csv", common.hours_csv, "reference hours table to compare against");
    cmd->add_option("--scatter-csv", common.scatter_csv, "Norm_I vs WER-delta points (norm_i,delta_wer,label)");
    cmd->add_option("--wer-csv", common.wer_csv, "WER deltas to include");
  }

  speechbt::backend::MockEngineConfig mock;
  speechbt::backend::ServeOptions serve_opts;
  double latency_call = 0, latency_item = 0;
  std::size_t crash_after = 0;
  std::string crash_marker, audio_dir = mock.audio_dir.string();
  auto* mw = app.add_subcommand("mock-worker", "deterministic mock TTS/ASR worker on stdin/stdout");
  mw->add_option("--cer", mock.char_error_rate, "character error rate in [0,1]");
  mw->add_option("--seconds-per-char", mock.seconds_per_char);
  mw->add_option("--seed", mock.seed);
  mw->add_option("--audio-dir", audio_dir);
  mw->add_option("--engine-id", mock.engine_id);
  mw->add_option("--max-batch", mock.max_batch);
  mw->add_option("--languages", mock.languages)->delimiter(',');
  mw->add_option("--latency-call", latency_call, "fixed seconds per batch call");
  mw->add_option("--latency-item", latency_item, "seconds per item");
  auto* crash_opt = mw->add_option("--crash-after", crash_after, "die on the batch request after N answered");
  mw->add_option("--crash-marker", crash_marker, "only crash while this file is absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigFailed;
  }

  if (*mw) {
    try {
      mock.audio_dir = audio_dir;
      if (latency_call > 0 || latency_item > 0) mock.latency_model = {latency_call, latency_item};
      if (crash_opt->count()) serve_opts.crash_after = crash_after;
      if (!crash_marker.empty()) serve_opts.crash_marker = crash_marker;
      return mock_worker(mock, serve_opts);
    } catch (const speechbt::Error& e) {
      std::cerr << "speechbt: " << e.what() << "\n";
      return kConfigFailed;
    }
  }
  for (const auto& [cmd, stage] : pipeline_cmds)
    if (*cmd) return run_pipeline(common, argv[0], stage);
  return kOk;
}
