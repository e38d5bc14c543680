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

// Stage runner over a run directory:
//
//   config.ini   effective configuration (reload it to reproduce the run)
//   run.lock     pid of the process currently writing here
//   01-text/ 02-prompts/ 03-vocab/ 04-plan/ 05-gate/ 06-synth/ 07-pack/ 08-report/
//
// Each stage directory gets a DONE marker once its outputs are complete, and
// a later invocation skips stages that have one. Synthesis additionally keeps
// a journal so an interrupted stage resumes where it stopped.

#include <signal.h>
#include <sys/types.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/backend/dispatch.hpp"
#include "speechbt/backend/journal.hpp"
#include "speechbt/core/error.hpp"
#include "speechbt/core/hash.hpp"
#include "speechbt/core/io.hpp"
#include "speechbt/metrics/intelligibility.hpp"
#include "speechbt/pipeline/config.hpp"
#include "speechbt/pipeline/manifest.hpp"
#include "speechbt/pipeline/report.hpp"
#include "speechbt/prompts/pool.hpp"
#include "speechbt/sched/batch.hpp"
#include "speechbt/sched/pack.hpp"
#include "speechbt/sched/plan.hpp"
#include "speechbt/text/bpe.hpp"
#include "speechbt/text/external_dedup.hpp"
#include "speechbt/text/sentence.hpp"
#include "speechbt/text/sentencize.hpp"

namespace speechbt::pipeline {

enum class Stage { kText, kPrompts, kVocab, kPlan, kGate, kSynth, kPack, kReport };

struct StageInfo {
  Stage stage;
  std::string_view dir;
  std::string_view command;
};

inline constexpr std::array<StageInfo, 8> kStages{{
    {Stage::kText, "01-text", "prepare-text"},
    {Stage::kPrompts, "02-prompts", "prepare-prompts"},
    {Stage::kVocab, "03-vocab", "expand-vocab"},
    {Stage::kPlan, "04-plan", "plan"},
    {Stage::kGate, "05-gate", "gate"},
    {Stage::kSynth, "06-synth", "synthesize"},
    {Stage::kPack, "07-pack", "pack"},
    {Stage::kReport, "08-report", "report"},
}};

inline const StageInfo& stage_info(Stage s) { return kStages[static_cast<std::size_t>(s)]; }

inline std::optional<Stage> parse_stage(std::string_view name) {
  for (const auto& s : kStages)
    if (s.command == name || s.dir == name) return s.stage;
  return std::nullopt;
}

// Stages whose outputs a stage reads.
inline std::vector<Stage> prerequisites(Stage s) {
  switch (s) {
    case Stage::kVocab: return {Stage::kText};
    case Stage::kGate: return {Stage::kText, Stage::kPrompts};
    case Stage::kSynth: return {Stage::kText, Stage::kPrompts, Stage::kPlan, Stage::kGate};
    case Stage::kPack: return {Stage::kSynth};
    default: return {};
  }
}

// Exclusive claim on a run directory. A lock left by a dead process is taken
// over.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / "run.lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::FILE* f = std::fopen(path_.c_str(), "wx");
      if (f) {
        std::fprintf(f, "%d\n", static_cast<int>(::getpid()));
        std::fclose(f);
        return;
      }
      long pid = 0;
      if (std::FILE* r = std::fopen(path_.c_str(), "r")) {
        if (std::fscanf(r, "%ld", &pid) != 1) pid = 0;
        std::fclose(r);
      }
      if (pid > 0 && ::kill(static_cast<pid_t>(pid), 0) == 0) {
        throw Error(ErrorCode::kIo, "run directory " + dir.string() + " is locked by running process " + std::to_string(pid));
      }
      fs::remove(path_);
    }
    throw Error(ErrorCode::kIo, "cannot create " + path_.string());
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

struct RunOptions {
  // Program used for {self} in worker commands.
  std::string self_exe;
  std::ostream* log = &std::cerr;
  ReportImports imports;
  // Fault injection for resume tests: abort synthesis after this many batches
  // have been recorded by the current process.
  std::optional<std::size_t> fault_abort_after_batches;
};

struct RunOutcome {
  bool gated = false;
  std::vector<std::string> warnings;
};

inline std::string safe_name(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_');
  return out.empty() ? "_" : out;
}

class Pipeline {
 public:
  Pipeline(RunConfig cfg, const fs::path& run_dir, RunOptions opts)
      : cfg_(std::move(cfg)), dir_(fs::absolute(run_dir).lexically_normal()), opts_(std::move(opts)), lock_(dir_) {
    const auto ini = to_ini(cfg_);
    const auto stored = dir_ / "config.ini";
    if (fs::exists(stored)) {
      if (io::read_file(stored) != ini) {
        throw Error(ErrorCode::kConfigError, "run directory " + dir_.string() +
                                                 " was created with a different configuration; use a fresh --run-dir");
      }
    } else {
      io::write_file_atomic(stored, ini);
    }
  }

  const fs::path& dir() const { return dir_; }
  const RunConfig& config() const { return cfg_; }

  fs::path stage_dir(Stage s) const { return dir_ / std::string(stage_info(s).dir); }
  bool done(Stage s) const { return fs::exists(stage_dir(s) / "DONE"); }

  // Runs every stage in order, skipping completed ones, up to and including
  // stop_after.
  RunOutcome run_all(std::optional<Stage> stop_after = std::nullopt) {
    RunOutcome out;
    for (const auto& s : kStages) {
      if (!done(s.stage)) run_stage(s.stage);
      else log() << "stage " << s.dir << ": already done\n";
      if (stop_after && *stop_after == s.stage) break;
    }
    out.gated = gated();
    out.warnings = warnings_;
    return out;
  }

  // Runs one stage. force discards its previous outputs and clears the DONE
  // markers of later stages.
  RunOutcome run_one(Stage s, bool force = false) {
    if (done(s) && !force) {
      log() << "stage " << stage_info(s).dir << ": already done (use --force to redo)\n";
    } else {
      if (force) {
        fs::remove_all(stage_dir(s));
        for (const auto& later : kStages)
          if (static_cast<int>(later.stage) > static_cast<int>(s)) fs::remove(stage_dir(later.stage) / "DONE");
      }
      run_stage(s);
    }
    RunOutcome out;
    out.gated = s >= Stage::kGate && done(Stage::kGate) && gated();
    out.warnings = warnings_;
    return out;
  }

  // True when some language has no accepted checkpoint.
  bool gated() const {
    const auto f = stage_dir(Stage::kGate) / "summary.json";
    if (!fs::exists(f)) return false;
    const auto j = json::parse(io::read_file(f));
    for (const auto& [lang, v] : j.items())
      if (!v.value("accepted_any", false)) return true;
    return false;
  }

 private:
  std::ostream& log() { return *opts_.log << "[speechbt] "; }

  void run_stage(Stage s) {
    for (Stage p : prerequisites(s)) {
      if (!done(p)) {
        throw Error(ErrorCode::kMissingRunData, std::string("stage ") + std::string(stage_info(s).command) +
                                                    " needs " + std::string(stage_info(p).command) + " first");
      }
    }
    log() << "stage " << stage_info(s).dir << ": running\n";
    fs::create_directories(stage_dir(s));
    switch (s) {
      case Stage::kText: stage_text(); break;
      case Stage::kPrompts: stage_prompts(); break;
      case Stage::kVocab: stage_vocab(); break;
      case Stage::kPlan: stage_plan(); break;
      case Stage::kGate: stage_gate(); break;
      case Stage::kSynth: stage_synth(); break;
      case Stage::kPack: stage_pack(); break;
      case Stage::kReport: stage_report(); break;
    }
    io::write_file_atomic(stage_dir(s) / "DONE", std::string(stage_info(s).command) + "\n");
  }

  fs::path sentences_file(const std::string& code) const {
    return stage_dir(Stage::kText) / (safe_name(code) + ".sent.jsonl");
  }

  std::vector<text::SentenceRecord> load_sentences(const std::string& code) const {
    std::vector<text::SentenceRecord> out;
    io::for_each_jsonl(sentences_file(code), [&](const json& j, std::size_t) { out.push_back(text::sentence_from_json(j)); });
    return out;
  }

  std::vector<prompts::PromptClip> load_retained_prompts() const {
    std::vector<prompts::PromptClip> out;
    io::for_each_jsonl(stage_dir(Stage::kPrompts) / "pool.jsonl", [&](const json& j, std::size_t) {
      if (j.value("retained", false)) out.push_back(prompts::prompt_from_json(j));
    });
    return out;
  }

  std::string relative(const std::string& path) const {
    const fs::path p(path);
    if (!p.is_absolute()) return path;
    const auto rel = p.lexically_normal().lexically_relative(dir_);
    if (rel.empty() || *rel.begin() == "..") return path;
    return rel.string();
  }

  // ---- 01-text -------------------------------------------------------------

  void stage_text() {
    const auto out_dir = stage_dir(Stage::kText);
    json stats = json::object();
    for (const auto& lang : cfg_.languages) {
      std::ifstream in(lang.input, std::ios::binary);
      if (!in) throw Error(ErrorCode::kIo, "cannot open text input " + lang.input.string());
      const auto source = text::parse_source(lang.source);
      const fs::path raw = out_dir / (safe_name(lang.code) + ".filtered.jsonl");
      std::map<std::string, std::size_t> rejected;
      std::size_t documents = 0, sentences = 0, kept = 0;
      {
        std::ofstream tmp(raw, std::ios::binary | std::ios::trunc);
        std::string doc;
        while (std::getline(in, doc)) {
          if (doc.find_first_not_of(" \t\r") == std::string::npos) continue;
          ++documents;
          for (const auto& s : text::sentencize(doc, lang.code)) {
            ++sentences;
            const auto rec = text::make_record(s, lang.code, source);
            const auto v = text::filter_sentence(rec, cfg_.filter);
            if (v != text::FilterVerdict::kKeep) {
              ++rejected[std::string(text::verdict_name(v))];
              continue;
            }
            ++kept;
            tmp << text::to_json(rec).dump() << '\n';
          }
        }
        if (!tmp) throw Error(ErrorCode::kIo, "cannot write " + raw.string());
      }
      std::size_t unique = 0;
      if (kept <= cfg_.max_ids_in_memory) {
        std::vector<text::SentenceRecord> recs;
        io::for_each_jsonl(raw, [&](const json& j, std::size_t) { recs.push_back(text::sentence_from_json(j)); });
        std::vector<json> rows;
        for (const auto& r : text::dedup_sentences(recs)) rows.push_back(text::to_json(r));
        unique = rows.size();
        io::write_jsonl(sentences_file(lang.code), rows);
      } else {
        const auto st = text::dedup_jsonl_external(raw, sentences_file(lang.code), out_dir / "scratch", cfg_.max_ids_in_memory);
        unique = st.kept;
        fs::remove_all(out_dir / "scratch");
      }
      fs::remove(raw);
      stats[lang.code] = {{"documents", documents}, {"sentences", sentences}, {"kept_after_filter", kept},
                          {"rejected", rejected}, {"unique", unique}};
      log() << "  " << lang.code << ": " << unique << " sentences kept of " << sentences << "\n";
    }
    io::write_json(out_dir / "stats.json", stats);
  }

  // ---- 02-prompts ----------------------------------------------------------

  void stage_prompts() {
    std::vector<prompts::PromptClip> clips;
    io::for_each_jsonl(cfg_.prompt_pool, [&](const json& j, std::size_t line) {
      try {
        clips.push_back(prompts::prompt_from_json(j));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::kInvalidInput, cfg_.prompt_pool.string() + ":" + std::to_string(line) + ": " + e.what());
      }
    });
    std::vector<prompts::PromptClip> in_bounds;
    std::vector<std::size_t> origin;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (prompts::within_bounds(clips[i], cfg_.clip_bounds)) {
        in_bounds.push_back(clips[i]);
        origin.push_back(i);
      }
    }
    std::vector<bool> keep(clips.size(), false);
    for (std::size_t k : prompts::dedup_pool_indices(in_bounds, cfg_.dedup)) keep[origin[k]] = true;
    std::vector<json> rows;
    std::size_t retained = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      rows.push_back(prompts::to_json(clips[i], keep[i]));
      retained += keep[i];
    }
    if (retained == 0) throw Error(ErrorCode::kInsufficientPool, "no prompt clip survived bounds and deduplication");
    io::write_jsonl(stage_dir(Stage::kPrompts) / "pool.jsonl", rows);
    io::write_json(stage_dir(Stage::kPrompts) / "stats.json",
                   {{"input", clips.size()}, {"within_bounds", in_bounds.size()}, {"retained", retained}});
    log() << "  prompts: " << retained << " retained of " << clips.size() << "\n";
  }

  // ---- 03-vocab ------------------------------------------------------------

  void stage_vocab() {
    const auto out_dir = stage_dir(Stage::kVocab);
    if (!cfg_.vocab_enabled) {
      io::write_json(out_dir / "vocab.json", {{"skipped", true}});
      return;
    }
    std::vector<text::SentenceRecord> corpus;
    for (const auto& lang : cfg_.languages) {
      auto recs = load_sentences(lang.code);
      corpus.insert(corpus.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    }
    const auto merges = text::learn_bpe(corpus, cfg_.num_merges, text::BpeOptions{"</w>", cfg_.vocab_threads});
    std::vector<std::string> base;
    if (cfg_.base_vocab) {
      std::istringstream in(io::read_file(*cfg_.base_vocab));
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) base.push_back(line);
    }
    io::write_file_atomic(out_dir / "merges.txt", text::format_merges(merges));
    io::write_json(out_dir / "vocab.json", text::to_json(text::expand_vocab(base, merges)));
    log() << "  vocab: " << merges.size() << " merges\n";
  }

  // ---- 04-plan -------------------------------------------------------------

  void stage_plan() {
    std::vector<sched::LanguageInput> in;
    for (const auto& l : cfg_.languages) in.push_back({l.code, l.real_hours, l.weight, l.reference_hours});
    const auto plans = sched::plan_budgets(in, cfg_.total_synth_hours, cfg_.policy, cfg_.tiers);
    io::write_json(stage_dir(Stage::kPlan) / "plan.json", sched::plan_to_json(plans, cfg_.policy, cfg_.total_synth_hours));
  }

  // ---- 05-gate -------------------------------------------------------------

  static std::vector<backend::SynthItem> synth_items(const sched::SynthesisBatch& b) {
    std::vector<backend::SynthItem> items;
    for (const auto& it : b.items) items.push_back({hex64(it.sentence_id), it.text});
    return items;
  }

  std::size_t batches_per_round(std::size_t workers) const {
    return cfg_.batches_per_round ? cfg_.batches_per_round : std::max<std::size_t>(4 * workers, 4);
  }

  double real_wer(const LanguageConfig& lang) const {
    if (lang.real_wer) return *lang.real_wer;
    std::vector<std::pair<std::string, std::string>> raw;
    io::for_each_jsonl(*lang.real_eval, [&](const json& j, std::size_t) {
      raw.emplace_back(j.at("reference").get<std::string>(), j.at("hypothesis").get<std::string>());
    });
    if (raw.empty()) throw Error(ErrorCode::kEmptyReference, "real evaluation set for " + lang.code + " is empty");
    return metrics::corpus_error_rate(metrics::normalize_pairs(raw, lang.code, cfg_.normalizer));
  }

  void stage_gate() {
    const auto out_dir = stage_dir(Stage::kGate);
    const auto audio = out_dir / "audio";
    const auto pool = load_retained_prompts();
    const auto tts = tts_commands(cfg_, opts_.self_exe, audio);
    const auto judges = judge_commands(cfg_, opts_.self_exe, audio);
    json summary = json::object();

    for (const auto& lang : cfg_.languages) {
      auto recs = load_sentences(lang.code);
      if (recs.empty()) throw Error(ErrorCode::kEmptyReference, "no sentences to evaluate for " + lang.code);
      if (recs.size() > cfg_.eval_sentences) recs.resize(cfg_.eval_sentences);
      std::vector<sched::SentenceRef> refs;
      for (const auto& r : recs) refs.push_back({r.id, r.text});
      const auto seed = derive_seed(cfg_.seed, "gate:" + lang.code);
      sched::PromptSampler sampler(pool, seed);
      const auto batches = sched::make_batches(lang.code, refs, cfg_.batch, sampler, seed, "gate-" + lang.code + "-");

      std::map<std::string, std::pair<std::string, std::string>> synthesized;  // id -> (audio_ref, engine)
      std::vector<backend::Job> jobs;
      for (const auto& b : batches) {
        jobs.push_back({b.batch_id, backend::Op::kSynthesizeBatch,
                        backend::synthesize_payload(b.prompt_ref, lang.code, b.seed, synth_items(b))});
      }
      backend::dispatch(jobs, tts,
                        [&](const backend::Job&, const json& r, const backend::Capabilities& caps) {
                          for (const auto& it : r["results"])
                            synthesized[it["id"]] = {it["audio_ref"].get<std::string>(), caps.engine_id};
                        },
                        cfg_.dispatch);

      std::map<std::string, std::string> heard;
      std::set<std::string> judge_ids;
      std::vector<backend::Job> asr;
      for (const auto& b : batches) {
        std::vector<backend::TranscribeItem> items;
        for (const auto& it : b.items) {
          const auto id = hex64(it.sentence_id);
          items.push_back({id, synthesized.at(id).first});
        }
        asr.push_back({b.batch_id + "-asr", backend::Op::kTranscribeBatch, backend::transcribe_payload(lang.code, items)});
      }
      backend::dispatch(asr, judges,
                        [&](const backend::Job&, const json& r, const backend::Capabilities& caps) {
                          for (const auto& it : r["results"]) heard[it["id"]] = it["text"].get<std::string>();
                          if (r["status"] == "ok") judge_ids.insert(caps.engine_id);
                        },
                        cfg_.dispatch);
      std::string judge_id;
      for (const auto& j : judge_ids) judge_id += (judge_id.empty() ? "" : "+") + j;

      std::map<std::string, std::vector<metrics::TextPair>> pairs;  // per checkpoint
      std::vector<json> transcript;
      for (const auto& r : recs) {
        const auto id = hex64(r.id);
        const auto& [ref, engine] = synthesized.at(id);
        const auto& hyp = heard.at(id);
        pairs[engine].emplace_back(metrics::normalize_text(r.text, lang.code, cfg_.normalizer),
                                   metrics::normalize_text(hyp, lang.code, cfg_.normalizer));
        transcript.push_back({{"sentence_id", id}, {"reference", r.text}, {"hypothesis", hyp}, {"checkpoint", engine},
                              {"audio_ref", relative(ref)}});
      }
      io::write_jsonl(out_dir / (safe_name(lang.code) + ".eval.jsonl"), transcript);

      const double wer_r = real_wer(lang);
      json per = json::object();
      bool any = false;
      for (const auto& [engine, syn] : pairs) {
        const auto report = metrics::gate_with_baseline(lang.code, wer_r, syn, judge_id,
                                                        {cfg_.gate_threshold, cfg_.degenerate_floor});
        const auto file = safe_name(lang.code) + "." + safe_name(engine) + ".json";
        auto j = metrics::to_json(report);
        j["checkpoint"] = engine;
        io::write_json(out_dir / file, j);
        per[engine] = {{"accepted", report.accepted}, {"report", std::string(stage_info(Stage::kGate).dir) + "/" + file},
                       {"norm_i", report.norm_i}};
        any = any || report.accepted;
        log() << "  " << lang.code << " @ " << engine << ": WER_r " << report.wer_real << ", WER_s "
              << report.wer_synthetic << ", Norm_I " << report.norm_i << " -> "
              << (report.accepted ? "accepted" : "REJECTED") << "\n";
      }
      summary[lang.code] = {{"accepted_any", any}, {"checkpoints", per}};
    }
    io::write_json(out_dir / "summary.json", summary);
  }

  // ---- 06-synth ------------------------------------------------------------

  struct LangSynth {
    const LanguageConfig* lang = nullptr;
    double target_hours = 0.0;
    std::vector<sched::SynthesisBatch> batches;
    std::map<std::string, std::string> accepted;  // engine -> report ref
  };

  static std::string item_key(const sched::BatchItem& it) { return hex64(it.sentence_id); }

  using JournalIndex = std::map<std::pair<std::string, std::string>, json>;

  static bool batch_complete(const sched::SynthesisBatch& b, const JournalIndex& idx) {
    return std::all_of(b.items.begin(), b.items.end(),
                       [&](const sched::BatchItem& it) { return idx.count({b.batch_id, item_key(it)}) > 0; });
  }

  // Walks batches in order over recorded results. Returns the first batch
  // not fully recorded, or nullopt once the target duration is covered.
  static std::optional<std::size_t> frontier(const LangSynth& ls, const JournalIndex& idx) {
    double secs = 0.0;
    const double target = ls.target_hours * 3600.0;
    for (std::size_t b = 0; b < ls.batches.size(); ++b) {
      if (secs >= target) return std::nullopt;
      if (!batch_complete(ls.batches[b], idx)) return b;
      for (const auto& it : ls.batches[b].items)
        secs += idx.at({ls.batches[b].batch_id, item_key(it)}).at("duration_s").get<double>();
    }
    return std::nullopt;
  }

  void stage_synth() {
    const auto out_dir = stage_dir(Stage::kSynth);
    const auto audio = out_dir / "audio";
    const auto pool = load_retained_prompts();
    const auto plan = sched::plan_from_json(json::parse(io::read_file(stage_dir(Stage::kPlan) / "plan.json")));
    const auto gate = json::parse(io::read_file(stage_dir(Stage::kGate) / "summary.json"));
    const auto tts = tts_commands(cfg_, opts_.self_exe, audio);

    std::vector<LangSynth> langs;
    std::vector<json> batch_rows;
    for (const auto& lang : cfg_.languages) {
      LangSynth ls;
      ls.lang = &lang;
      for (const auto& p : plan)
        if (p.language == lang.code) ls.target_hours = p.target_synth_hours;
      if (gate.contains(lang.code)) {
        for (const auto& [engine, v] : gate[lang.code]["checkpoints"].items())
          if (v.value("accepted", false)) ls.accepted[engine] = v["report"].get<std::string>();
      }
      if (ls.accepted.empty()) {
        warnings_.push_back(lang.code + ": no accepted checkpoint, nothing synthesized");
      } else {
        const auto recs = load_sentences(lang.code);
        std::vector<sched::SentenceRef> refs;
        for (const auto& r : recs) refs.push_back({r.id, r.text});
        const auto seed = derive_seed(cfg_.seed, "synth:" + lang.code);
        sched::PromptSampler sampler(pool, seed);
        ls.batches = sched::make_batches(lang.code, refs, cfg_.batch, sampler, seed, lang.code + "-");
        for (const auto& b : ls.batches) batch_rows.push_back(sched::to_json(b));
      }
      langs.push_back(std::move(ls));
    }
    io::write_jsonl(out_dir / "batches.jsonl", batch_rows);

    backend::ResultJournal journal(out_dir / "journal.jsonl");
    JournalIndex idx;
    for (const auto& row : journal.rows())
      idx[{row["batch_id"].get<std::string>(), row["item_id"].get<std::string>()}] = row["value"];
    std::size_t recorded_batches = 0;
    const std::size_t chunk = batches_per_round(tts.size());
    std::map<std::string, const LangSynth*> by_lang;
    for (const auto& ls : langs) by_lang[ls.lang->code] = &ls;

    for (;;) {
      std::vector<backend::Job> jobs;
      for (const auto& ls : langs) {
        auto start = frontier(ls, idx);
        if (!start) continue;
        std::size_t taken = 0;
        for (std::size_t b = *start; b < ls.batches.size() && taken < chunk; ++b) {
          const auto& batch = ls.batches[b];
          if (batch_complete(batch, idx)) continue;
          jobs.push_back({batch.batch_id, backend::Op::kSynthesizeBatch,
                          backend::synthesize_payload(batch.prompt_ref, ls.lang->code, batch.seed, synth_items(batch))});
          ++taken;
        }
      }
      if (jobs.empty()) break;
      log() << "  dispatching " << jobs.size() << " batches\n";
      backend::dispatch(
          jobs, tts,
          [&](const backend::Job& job, const json& r, const backend::Capabilities& caps) {
            const auto& ls = *by_lang.at(job.language());
            if (!ls.accepted.count(caps.engine_id)) {
              throw Error(ErrorCode::kBatchFailed, "engine " + caps.engine_id + " has no accepted gate report for " +
                                                       job.language());
            }
            for (const auto& it : r["results"]) {
              const auto id = it["id"].get<std::string>();
              json value = {{"audio_ref", relative(it["audio_ref"].get<std::string>())},
                            {"duration_s", it["duration_s"]},
                            {"engine_id", caps.engine_id}};
              if (journal.record(job.job_id, id, value)) idx[{job.job_id, id}] = std::move(value);
            }
            if (r["status"] == "ok") {
              ++recorded_batches;
              if (opts_.fault_abort_after_batches && recorded_batches >= *opts_.fault_abort_after_batches) {
                throw Error(ErrorCode::kBatchFailed,
                            "fault injection: aborting after " + std::to_string(recorded_batches) + " batches");
              }
            }
          },
          cfg_.dispatch);
    }

    std::vector<json> manifest;
    json summary = json::object();
    for (const auto& ls : langs) {
      const double target = ls.target_hours * 3600.0;
      double secs = 0.0;
      std::size_t n = 0;
      bool reached = false;
      for (const auto& b : ls.batches) {
        for (const auto& it : b.items) {
          if (secs >= target) {
            reached = true;
            break;
          }
          const auto found = idx.find({b.batch_id, item_key(it)});
          if (found == idx.end()) throw Error(ErrorCode::kMissingRunData, "no result recorded for " + b.batch_id);
          const auto& row = found->second;
          ManifestEntry e;
          e.utt_id = ls.lang->code + "-" + item_key(it);
          e.language = ls.lang->code;
          e.text = it.text;
          e.audio_ref = row.at("audio_ref").get<std::string>();
          e.duration_s = row.at("duration_s").get<double>();
          e.prompt_id = b.prompt_id;
          e.batch_id = b.batch_id;
          e.engine_id = row.at("engine_id").get<std::string>();
          e.seed = b.seed;
          e.gate_report_ref = ls.accepted.at(e.engine_id);
          secs += e.duration_s;
          ++n;
          manifest.push_back(to_json(e));
        }
        if (reached) break;
      }
      reached = reached || secs >= target;
      const bool shortfall = !ls.accepted.empty() && !reached;
      if (shortfall) {
        warnings_.push_back(ls.lang->code + ": sentence supply exhausted at " + format_number(secs / 3600.0) + " of " +
                            format_number(ls.target_hours) + " planned hours");
      }
      summary[ls.lang->code] = {{"target_synth_hours", ls.target_hours}, {"synth_hours", secs / 3600.0},
                                {"utterances", n}, {"shortfall", shortfall}, {"gated", ls.accepted.empty()}};
    }
    io::write_jsonl(out_dir / "manifest.jsonl", manifest);
    io::write_json(out_dir / "summary.json", summary);
    io::write_json(out_dir / "warnings.json", warnings_);
    for (const auto& w : warnings_) log() << "  warning: " << w << "\n";
  }

  // ---- 07-pack -------------------------------------------------------------

  void stage_pack() {
    const auto manifest = read_manifest(stage_dir(Stage::kSynth) / "manifest.jsonl");
    std::vector<json> rows;
    json summary = json::object();
    for (const auto& lang : cfg_.languages) {
      std::vector<sched::ClipDuration> clips;
      for (const auto& e : manifest)
        if (e.language == lang.code) clips.push_back({e.utt_id, e.duration_s});
      const auto segs = sched::pack_segments(clips, cfg_.segment_budget_s, lang.code + "-seg");
      for (const auto& s : segs) {
        rows.push_back({{"segment_id", s.segment_id}, {"language", lang.code}, {"clip_ids", s.clip_ids},
                        {"total_duration_s", s.total_duration_s}});
      }
      summary[lang.code] = {{"clips", clips.size()}, {"segments", segs.size()}};
    }
    io::write_jsonl(stage_dir(Stage::kPack) / "segments.jsonl", rows);
    io::write_json(stage_dir(Stage::kPack) / "summary.json", summary);
  }

  // ---- 08-report -----------------------------------------------------------

  void stage_report() {
    auto res = write_report(dir_, stage_dir(Stage::kReport), opts_.imports, cfg_.gate_threshold);
    for (auto& w : res.warnings) {
      log() << "  warning: " << w << "\n";
      warnings_.push_back(std::move(w));
    }
  }

  RunConfig cfg_;
  fs::path dir_;
  RunOptions opts_;
  RunLock lock_;
  std::vector<std::string> warnings_;
};

}  // namespace speechbt::pipeline
