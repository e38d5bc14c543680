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

#pragma once

// Run configuration: an INI file, checked against a fixed schema, with
// SPEECHBT_<SECTION>_<KEY> environment overrides on top. Relative paths are
// resolved against the config file's directory. Per-language settings live in
// [language:<code>] sections; their env names use the code upper-cased with
// '-' mapped to '_' (SPEECHBT_LANGUAGE_EN_REAL_WER).
//
// Worker commands may use two placeholders: {self} expands to this program
// and {audio_dir} to the directory the stage wants audio written to.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/backend/dispatch.hpp"
#include "speechbt/core/error.hpp"
#include "speechbt/core/io.hpp"
#include "speechbt/metrics/intelligibility.hpp"
#include "speechbt/metrics/normalize.hpp"
#include "speechbt/prompts/pool.hpp"
#include "speechbt/sched/batch.hpp"
#include "speechbt/sched/plan.hpp"
#include "speechbt/text/sentence.hpp"

namespace speechbt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct LanguageConfig {
  std::string code;
  fs::path input;
  std::string source = "other:unspecified";
  double real_hours = 0.0;
  double weight = 1.0;
  std::optional<double> reference_hours;
  // Judge WER on real speech: either given directly or computed from a JSONL
  // file of {"reference","hypothesis"} pairs.
  std::optional<double> real_wer;
  std::optional<fs::path> real_eval;
};

struct RunConfig {
  std::uint64_t seed = 0;

  text::FilterPolicy filter;
  std::size_t max_ids_in_memory = 5'000'000;
  metrics::NormalizerConfig normalizer;

  fs::path prompt_pool;
  prompts::DedupOptions dedup;
  prompts::ClipBounds clip_bounds;

  bool vocab_enabled = false;
  std::optional<fs::path> base_vocab;
  std::size_t num_merges = 1000;
  std::size_t vocab_threads = 1;

  double total_synth_hours = 1.0;
  sched::BudgetPolicy policy = sched::BudgetPolicy::kUniform;
  sched::TierThresholds tiers;

  sched::BatchOptions batch;
  std::size_t batches_per_round = 0;  // 0: four per worker

  double gate_threshold = metrics::kDefaultGateThreshold;
  std::size_t eval_sentences = 50;
  std::optional<double> degenerate_floor;

  std::string command = "{self} mock-worker --audio-dir {audio_dir}";
  std::size_t workers = 1;
  std::optional<std::string> judge_command;
  std::size_t judge_workers = 1;
  // Explicit per-worker commands (the --workers flag); replace command x workers.
  std::vector<std::string> worker_commands;
  backend::DispatchOptions dispatch;

  double segment_budget_s = 30.0;

  std::vector<LanguageConfig> languages;

  const LanguageConfig& language(const std::string& code) const {
    for (const auto& l : languages)
      if (l.code == code) return l;
    throw Error(ErrorCode::kConfigError, "unknown language " + code);
  }
};

namespace detail {

enum class Kind { kUint, kDouble, kBool, kString, kPath };

struct KeySpec {
  Kind kind;
  bool required = false;
};

inline const std::map<std::string, std::map<std::string, KeySpec>>& schema() {
  static const std::map<std::string, std::map<std::string, KeySpec>> s{
      {"run", {{"seed", {Kind::kUint}}}},
      {"text",
       {{"min_chars", {Kind::kUint}},
        {"max_chars", {Kind::kUint}},
        {"min_alpha_ratio", {Kind::kDouble}},
        {"max_ids_in_memory", {Kind::kUint}},
        {"character_languages", {Kind::kString}}}},
      {"prompts",
       {{"pool", {Kind::kPath, true}},
        {"dedup_threshold", {Kind::kDouble}},
        {"prune", {Kind::kBool}},
        {"min_duration_s", {Kind::kDouble}},
        {"max_duration_s", {Kind::kDouble}}}},
      {"vocab",
       {{"enabled", {Kind::kBool}},
        {"base_vocab", {Kind::kPath}},
        {"num_merges", {Kind::kUint}},
        {"threads", {Kind::kUint}}}},
      {"plan",
       {{"total_synth_hours", {Kind::kDouble}},
        {"policy", {Kind::kString}},
        {"high_tier_hours", {Kind::kDouble}},
        {"low_tier_hours", {Kind::kDouble}}}},
      {"synth",
       {{"max_batch", {Kind::kUint}},
        {"max_spread", {Kind::kUint}},
        {"prompt_len", {Kind::kUint}},
        {"batches_per_round", {Kind::kUint}}}},
      {"gate",
       {{"threshold", {Kind::kDouble}}, {"eval_sentences", {Kind::kUint}}, {"degenerate_floor", {Kind::kDouble}}}},
      {"backend",
       {{"command", {Kind::kString}},
        {"workers", {Kind::kUint}},
        {"judge_command", {Kind::kString}},
        {"judge_workers", {Kind::kUint}},
        {"max_attempts", {Kind::kUint}},
        {"backoff_ms", {Kind::kUint}},
        {"handshake_timeout_s", {Kind::kDouble}},
        {"request_timeout_s", {Kind::kDouble}}}},
      {"pack", {{"segment_budget_s", {Kind::kDouble}}}},
  };
  return s;
}

inline const std::map<std::string, KeySpec>& language_schema() {
  static const std::map<std::string, KeySpec> s{
      {"input", {Kind::kPath, true}},      {"source", {Kind::kString}},          {"real_hours", {Kind::kDouble}},
      {"weight", {Kind::kDouble}},         {"reference_hours", {Kind::kDouble}}, {"real_wer", {Kind::kDouble}},
      {"real_eval", {Kind::kPath}},
  };
  return s;
}

inline std::string env_name(const std::string& section, const std::string& key) {
  std::string out = "SPEECHBT_";
  for (char c : section + "_" + key) {
    if (c == ':' || c == '-') c = '_';
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

inline std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

inline std::uint64_t parse_uint(const std::string& v, const std::string& at) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw Error(ErrorCode::kConfigError, at + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& v, const std::string& at) {
  double out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) {
    throw Error(ErrorCode::kConfigError, at + ": expected a number, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& at) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw Error(ErrorCode::kConfigError, at + ": expected true or false, got '" + v + "'");
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flattened, validated view: section -> key -> raw value.
using Values = std::map<std::string, std::map<std::string, std::string>>;

inline const std::map<std::string, KeySpec>& spec_for(const std::string& section) {
  static const std::map<std::string, KeySpec> none;
  if (section.rfind("language:", 0) == 0) return language_schema();
  if (section == "workers") return none;
  auto it = schema().find(section);
  if (it == schema().end()) throw Error(ErrorCode::kConfigError, "unknown section [" + section + "]");
  return it->second;
}

}  // namespace detail

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline RunConfig parse_config(const std::string& ini_text, const fs::path& base_dir, const EnvLookup& env = process_env) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::kConfigError, std::string("config syntax: ") + e.what());
  }

  detail::Values values;
  // [workers] lists one command per key, in file order (the key names are free).
  std::vector<std::string> c_worker_commands;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(ErrorCode::kConfigError, "key '" + section + "' outside any section");
    }
    const auto& spec = detail::spec_for(section);
    if (section.rfind("language:", 0) == 0 && section.size() == 9) {
      throw Error(ErrorCode::kConfigError, "empty language code in [language:]");
    }
    auto& dst = values[section];
    for (const auto& [key, node] : body) {
      if (section == "workers") {
        c_worker_commands.push_back(detail::trim(node.data()));
        continue;
      }
      if (!spec.count(key)) throw Error(ErrorCode::kConfigError, "unknown key " + detail::where(section, key));
      dst[key] = detail::trim(node.data());
    }
  }
  for (const auto& [section, spec] : detail::schema()) {
    for (const auto& [key, ks] : spec) {
      if (auto v = env(detail::env_name(section, key))) values[section][key] = detail::trim(*v);
    }
  }
  for (auto& [section, kv] : values) {
    if (section.rfind("language:", 0) != 0) continue;
    for (const auto& [key, ks] : detail::language_schema()) {
      if (auto v = env(detail::env_name(section, key))) kv[key] = detail::trim(*v);
    }
  }
  for (const auto& [section, kv] : values) {
    for (const auto& [key, ks] : detail::spec_for(section)) {
      if (ks.required && (!kv.count(key) || kv.at(key).empty())) {
        throw Error(ErrorCode::kConfigError, "missing required " + detail::where(section, key));
      }
    }
  }
  if (!values.count("prompts")) throw Error(ErrorCode::kConfigError, "missing required [prompts] pool");

  auto get = [&](const std::string& s, const std::string& k) -> std::optional<std::string> {
    auto si = values.find(s);
    if (si == values.end()) return std::nullopt;
    auto ki = si->second.find(k);
    if (ki == si->second.end()) return std::nullopt;
    return ki->second;
  };
  auto as_uint = [&](const std::string& s, const std::string& k, auto& out) {
    if (auto v = get(s, k)) out = static_cast<std::remove_reference_t<decltype(out)>>(detail::parse_uint(*v, detail::where(s, k)));
  };
  auto as_double = [&](const std::string& s, const std::string& k, double& out) {
    if (auto v = get(s, k)) out = detail::parse_double(*v, detail::where(s, k));
  };
  auto as_opt_double = [&](const std::string& s, const std::string& k, std::optional<double>& out) {
    if (auto v = get(s, k); v && !v->empty()) out = detail::parse_double(*v, detail::where(s, k));
  };
  auto as_bool = [&](const std::string& s, const std::string& k, bool& out) {
    if (auto v = get(s, k)) out = detail::parse_bool(*v, detail::where(s, k));
  };
  auto as_path = [&](const std::string& s, const std::string& k) -> std::optional<fs::path> {
    auto v = get(s, k);
    if (!v || v->empty()) return std::nullopt;
    fs::path p(*v);
    return (p.is_absolute() ? p : base_dir / p).lexically_normal();
  };
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kConfigError, what);
  };

  RunConfig c;
  c.worker_commands = std::move(c_worker_commands);
  as_uint("run", "seed", c.seed);

  as_uint("text", "min_chars", c.filter.min_chars);
  as_uint("text", "max_chars", c.filter.max_chars);
  as_double("text", "min_alpha_ratio", c.filter.min_alpha_ratio);
  as_uint("text", "max_ids_in_memory", c.max_ids_in_memory);
  if (auto v = get("text", "character_languages")) {
    c.normalizer.character_languages.clear();
    std::istringstream in(*v);
    for (std::string tok; std::getline(in, tok, ',');)
      if (!detail::trim(tok).empty()) c.normalizer.character_languages.insert(detail::trim(tok));
  }
  check(c.filter.min_chars <= c.filter.max_chars, "[text] min_chars exceeds max_chars");
  check(c.filter.min_alpha_ratio >= 0 && c.filter.min_alpha_ratio <= 1, "[text] min_alpha_ratio outside [0, 1]");
  check(c.max_ids_in_memory > 0, "[text] max_ids_in_memory must be positive");

  c.prompt_pool = *as_path("prompts", "pool");
  as_double("prompts", "dedup_threshold", c.dedup.threshold);
  as_bool("prompts", "prune", c.dedup.prune);
  as_double("prompts", "min_duration_s", c.clip_bounds.min_duration_s);
  as_double("prompts", "max_duration_s", c.clip_bounds.max_duration_s);
  check(c.dedup.threshold > 0 && c.dedup.threshold <= 1, "[prompts] dedup_threshold outside (0, 1]");
  check(c.clip_bounds.min_duration_s <= c.clip_bounds.max_duration_s, "[prompts] min_duration_s exceeds max");

  as_bool("vocab", "enabled", c.vocab_enabled);
  c.base_vocab = as_path("vocab", "base_vocab");
  as_uint("vocab", "num_merges", c.num_merges);
  as_uint("vocab", "threads", c.vocab_threads);
  check(c.vocab_threads >= 1, "[vocab] threads must be at least 1");

  as_double("plan", "total_synth_hours", c.total_synth_hours);
  if (auto v = get("plan", "policy")) {
    try {
      c.policy = sched::parse_policy(*v);
    } catch (const Error&) {
      throw Error(ErrorCode::kConfigError, "[plan] policy must be uniform or weighted");
    }
  }
  as_double("plan", "high_tier_hours", c.tiers.high_min_hours);
  as_double("plan", "low_tier_hours", c.tiers.low_max_hours);
  check(c.total_synth_hours > 0, "[plan] total_synth_hours must be positive");

  as_uint("synth", "max_batch", c.batch.max_batch);
  as_uint("synth", "max_spread", c.batch.max_spread);
  as_uint("synth", "prompt_len", c.batch.prompt_len);
  as_uint("synth", "batches_per_round", c.batches_per_round);
  check(c.batch.max_batch >= 1, "[synth] max_batch must be at least 1");

  as_double("gate", "threshold", c.gate_threshold);
  as_uint("gate", "eval_sentences", c.eval_sentences);
  as_opt_double("gate", "degenerate_floor", c.degenerate_floor);
  check(c.gate_threshold > 0, "[gate] threshold must be positive");
  check(c.eval_sentences >= 1, "[gate] eval_sentences must be at least 1");
  check(!c.degenerate_floor || *c.degenerate_floor > 0, "[gate] degenerate_floor must be positive");

  if (auto v = get("backend", "command")) c.command = *v;
  as_uint("backend", "workers", c.workers);
  if (auto v = get("backend", "judge_command"); v && !v->empty()) c.judge_command = *v;
  as_uint("backend", "judge_workers", c.judge_workers);
  if (auto v = get("backend", "max_attempts")) c.dispatch.max_attempts = static_cast<int>(detail::parse_uint(*v, "[backend] max_attempts"));
  if (auto v = get("backend", "backoff_ms")) c.dispatch.backoff = std::chrono::milliseconds(detail::parse_uint(*v, "[backend] backoff_ms"));
  double hs = static_cast<double>(c.dispatch.handshake_timeout.count()) / 1000.0;
  double rs = static_cast<double>(c.dispatch.request_timeout.count()) / 1000.0;
  as_double("backend", "handshake_timeout_s", hs);
  as_double("backend", "request_timeout_s", rs);
  c.dispatch.handshake_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(hs * 1000));
  c.dispatch.request_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(rs * 1000));
  check(c.dispatch.max_attempts >= 1, "[backend] max_attempts must be at least 1");
  check(hs > 0 && rs > 0, "[backend] timeouts must be positive");

  as_double("pack", "segment_budget_s", c.segment_budget_s);
  check(c.segment_budget_s > 0, "[pack] segment_budget_s must be positive");

  // Language sections keep file order; env-only sections cannot create one.
  for (const auto& [section, body] : tree) {
    if (section.rfind("language:", 0) != 0) continue;
    LanguageConfig l;
    l.code = section.substr(9);
    l.input = *as_path(section, "input");
    if (auto v = get(section, "source")) l.source = text::to_string(text::parse_source(*v));
    as_double(section, "real_hours", l.real_hours);
    as_double(section, "weight", l.weight);
    as_opt_double(section, "reference_hours", l.reference_hours);
    as_opt_double(section, "real_wer", l.real_wer);
    l.real_eval = as_path(section, "real_eval");
    check(l.real_hours >= 0 && l.weight >= 0, "[" + section + "] hours and weight must be non-negative");
    check(l.real_wer.has_value() != l.real_eval.has_value(),
          "[" + section + "] needs exactly one of real_wer or real_eval");
    check(!l.real_wer || *l.real_wer >= 0, "[" + section + "] real_wer must be non-negative");
    for (const auto& other : c.languages) check(other.code != l.code, "duplicate language " + l.code);
    c.languages.push_back(std::move(l));
  }
  check(!c.languages.empty(), "config declares no [language:<code>] section");
  return c;
}

inline RunConfig load_config(const fs::path& path, const EnvLookup& env = process_env) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, std::string("cannot read config: ") + e.what());
  }
  return parse_config(text, fs::absolute(path).parent_path(), env);
}

// The effective configuration as a complete INI file. Loading it back gives
// an equal RunConfig; it is what a run directory stores.
inline std::string to_ini(const RunConfig& c) {
  auto num = [](double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
  };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::ostringstream o;
  o << "[run]\nseed = " << c.seed << "\n\n";
  std::string chars;
  for (const auto& l : c.normalizer.character_languages) chars += (chars.empty() ? "" : ",") + l;
  o << "[text]\nmin_chars = " << c.filter.min_chars << "\nmax_chars = " << c.filter.max_chars
    << "\nmin_alpha_ratio = " << num(c.filter.min_alpha_ratio) << "\nmax_ids_in_memory = " << c.max_ids_in_memory
    << "\ncharacter_languages = " << chars << "\n\n";
  o << "[prompts]\npool = " << c.prompt_pool.string() << "\ndedup_threshold = " << num(c.dedup.threshold)
    << "\nprune = " << b(c.dedup.prune) << "\nmin_duration_s = " << num(c.clip_bounds.min_duration_s)
    << "\nmax_duration_s = " << num(c.clip_bounds.max_duration_s) << "\n\n";
  o << "[vocab]\nenabled = " << b(c.vocab_enabled) << "\n";
  if (c.base_vocab) o << "base_vocab = " << c.base_vocab->string() << "\n";
  o << "num_merges = " << c.num_merges << "\nthreads = " << c.vocab_threads << "\n\n";
  o << "[plan]\ntotal_synth_hours = " << num(c.total_synth_hours) << "\npolicy = " << sched::policy_name(c.policy)
    << "\nhigh_tier_hours = " << num(c.tiers.high_min_hours) << "\nlow_tier_hours = " << num(c.tiers.low_max_hours)
    << "\n\n";
  o << "[synth]\nmax_batch = " << c.batch.max_batch << "\nmax_spread = " << c.batch.max_spread
    << "\nprompt_len = " << c.batch.prompt_len << "\nbatches_per_round = " << c.batches_per_round << "\n\n";
  o << "[gate]\nthreshold = " << num(c.gate_threshold) << "\neval_sentences = " << c.eval_sentences << "\n";
  if (c.degenerate_floor) o << "degenerate_floor = " << num(*c.degenerate_floor) << "\n";
  o << "\n[backend]\ncommand = " << c.command << "\nworkers = " << c.workers << "\n";
  if (c.judge_command) o << "judge_command = " << *c.judge_command << "\n";
  o << "judge_workers = " << c.judge_workers << "\nmax_attempts = " << c.dispatch.max_attempts
    << "\nbackoff_ms = " << c.dispatch.backoff.count()
    << "\nhandshake_timeout_s = " << num(static_cast<double>(c.dispatch.handshake_timeout.count()) / 1000.0)
    << "\nrequest_timeout_s = " << num(static_cast<double>(c.dispatch.request_timeout.count()) / 1000.0) << "\n\n";
  if (!c.worker_commands.empty()) {
    o << "[workers]\n";
    for (std::size_t i = 0; i < c.worker_commands.size(); ++i) o << "w" << i << " = " << c.worker_commands[i] << "\n";
    o << "\n";
  }
  o << "[pack]\nsegment_budget_s = " << num(c.segment_budget_s) << "\n";
  for (const auto& l : c.languages) {
    o << "\n[language:" << l.code << "]\ninput = " << l.input.string() << "\nsource = " << l.source
      << "\nreal_hours = " << num(l.real_hours) << "\nweight = " << num(l.weight) << "\n";
    if (l.reference_hours) o << "reference_hours = " << num(*l.reference_hours) << "\n";
    if (l.real_wer) o << "real_wer = " << num(*l.real_wer) << "\n";
    if (l.real_eval) o << "real_eval = " << l.real_eval->string() << "\n";
  }
  return o.str();
}

inline std::string expand_command(std::string cmd, const std::string& self, const fs::path& audio_dir) {
  auto replace_all = [&](const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = cmd.find(from, pos)) != std::string::npos; pos += to.size()) cmd.replace(pos, from.size(), to);
  };
  replace_all("{self}", "'" + self + "'");
  replace_all("{audio_dir}", "'" + audio_dir.string() + "'");
  return cmd;
}

// Synthesis worker commands for one stage.
inline std::vector<std::string> tts_commands(const RunConfig& c, const std::string& self, const fs::path& audio_dir) {
  std::vector<std::string> out;
  if (!c.worker_commands.empty()) {
    for (const auto& w : c.worker_commands) out.push_back(expand_command(w, self, audio_dir));
  } else {
    for (std::size_t i = 0; i < c.workers; ++i) out.push_back(expand_command(c.command, self, audio_dir));
  }
  return out;
}

inline std::vector<std::string> judge_commands(const RunConfig& c, const std::string& self, const fs::path& audio_dir) {
  if (!c.judge_command) return tts_commands(c, self, audio_dir);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < c.judge_workers; ++i) out.push_back(expand_command(*c.judge_command, self, audio_dir));
  return out;
}

}  // namespace speechbt::pipeline
