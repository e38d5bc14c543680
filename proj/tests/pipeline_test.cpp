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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "speechbt/core/io.hpp"
#include "speechbt/pipeline/config.hpp"
#include "speechbt/pipeline/report.hpp"
#include "speechbt/pipeline/run.hpp"
#include "speechbt/pipeline/tables.hpp"

namespace speechbt::pipeline {
namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("speechbt_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EnvLookup no_env() {
  return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

const char* kMinimal = R"([prompts]
pool = pool.jsonl

[language:en]
input = en.txt
real_wer = 0.1
)";

// ---- config ------------------------------------------------------------------

TEST(Config, MinimalResolvesPathsAndDefaults) {
  const auto c = parse_config(kMinimal, "/data/run", no_env());
  EXPECT_EQ(c.prompt_pool, fs::path("/data/run/pool.jsonl"));
  ASSERT_EQ(c.languages.size(), 1u);
  EXPECT_EQ(c.languages[0].input, fs::path("/data/run/en.txt"));
  EXPECT_EQ(c.languages[0].real_wer, 0.1);
  EXPECT_EQ(c.gate_threshold, 0.01);
  EXPECT_EQ(c.workers, 1u);
}

TEST(Config, UnknownKeyAndSectionRejected) {
  EXPECT_THROW(parse_config(std::string(kMinimal) + "[gate]\nthreshhold = 0.2\n", "/", no_env()), Error);
  EXPECT_THROW(parse_config(std::string(kMinimal) + "[gating]\nthreshold = 0.2\n", "/", no_env()), Error);
}

TEST(Config, ErrorsCarryConfigCode) {
  try {
    parse_config("[language:en]\ninput = x\nreal_wer = 0.1\n", "/", no_env());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
  }
}

TEST(Config, LanguageNeedsExactlyOneBaseline) {
  EXPECT_THROW(parse_config("[prompts]\npool = p\n[language:en]\ninput = x\n", "/", no_env()), Error);
  EXPECT_THROW(parse_config("[prompts]\npool = p\n[language:en]\ninput = x\nreal_wer = 0.1\nreal_eval = e.jsonl\n", "/",
                            no_env()),
               Error);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse_config(std::string(kMinimal) + "[gate]\nthreshold = abc\n", "/", no_env()), Error);
  EXPECT_THROW(parse_config(std::string(kMinimal) + "[plan]\npolicy = greedy\n", "/", no_env()), Error);
  EXPECT_THROW(parse_config(std::string(kMinimal) + "[synth]\nmax_batch = -3\n", "/", no_env()), Error);
}

TEST(Config, EnvironmentOverridesFile) {
  std::map<std::string, std::string> env{{"SPEECHBT_GATE_THRESHOLD", "0.5"},
                                         {"SPEECHBT_LANGUAGE_EN_REAL_WER", "0.25"},
                                         {"SPEECHBT_RUN_SEED", "99"}};
  const auto c = parse_config(std::string(kMinimal) + "[gate]\nthreshold = 0.2\n", "/",
                              [&](const std::string& k) -> std::optional<std::string> {
                                auto it = env.find(k);
                                if (it == env.end()) return std::nullopt;
                                return it->second;
                              });
  EXPECT_EQ(c.gate_threshold, 0.5);
  EXPECT_EQ(c.languages[0].real_wer, 0.25);
  EXPECT_EQ(c.seed, 99u);
}

TEST(Config, EffectiveIniRoundTrips) {
  const std::string ini = std::string(kMinimal) + R"(
[run]
seed = 18446744073709551615
[plan]
total_synth_hours = 0.30000000000000004
policy = weighted
[gate]
degenerate_floor = 0.001
[backend]
judge_command = asr --lang en
[workers]
gpu0 = {self} mock-worker --audio-dir {audio_dir}
gpu1 = python -m speechbt_adapter --device cuda:1
[language:vi]
input = vi.txt
real_eval = vi_eval.jsonl
weight = 2.5
)";
  const auto c = parse_config(ini, "/w", no_env());
  const auto once = to_ini(c);
  const auto again = to_ini(parse_config(once, "/elsewhere", no_env()));
  EXPECT_EQ(once, again);
  EXPECT_NE(once.find("seed = 18446744073709551615"), std::string::npos);
  EXPECT_NE(once.find("total_synth_hours = 0.30000000000000004"), std::string::npos);
  EXPECT_EQ(c.worker_commands.size(), 2u);
}

TEST(Config, CommandPlaceholdersAreQuoted) {
  EXPECT_EQ(expand_command("{self} mock-worker --audio-dir {audio_dir}", "/opt/my tools/speechbt", "/r/a b"),
            "'/opt/my tools/speechbt' mock-worker --audio-dir '/r/a b'");
}

// ---- tables and report --------------------------------------------------------

TEST(Csv, QuotedFieldsAndSeparators) {
  const auto t = parse_csv("a,b,c\n\"x,1\",\"say \"\"hi\"\"\",\"multi\nline\"\r\n1,,3\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
  EXPECT_EQ(t.rows[0][2], "multi\nline");
  EXPECT_EQ(t.rows[1][1], "");
  EXPECT_EQ(parse_csv(t.to_string()).rows, t.rows);
  EXPECT_THROW(parse_csv("a,b\n1\n"), Error);
  EXPECT_THROW(parse_csv("a\n\"open\n"), Error);
}

TEST(Csv, NumbersWithThousandsSeparators) {
  EXPECT_EQ(parse_number("505,830"), 505830.0);
  EXPECT_EQ(parse_number("0.25"), 0.25);
  EXPECT_THROW(parse_number("12h"), Error);
  EXPECT_THROW(parse_number(""), Error);
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(505830), "505830");
}

TEST(Report, NothingToReportIsAnError) {
  const auto dir = scratch("report_nothing");
  try {
    write_report(dir, dir / "out", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingRunData);
  }
}

TEST(Report, EmptyManifestGivesHeadersOnly) {
  const auto dir = scratch("report_empty");
  io::write_file_atomic(dir / "06-synth" / "manifest.jsonl", "");
  const auto res = write_report(dir, dir / "out", {});
  EXPECT_EQ(io::read_file(dir / "out" / "hours.csv"), "language,real_hours,target_synth_hours,synth_hours,utterances\n");
  EXPECT_EQ(io::read_file(dir / "out" / "gate.csv"),
            "language,checkpoint,wer_real,wer_synthetic,norm_i,gate_threshold,accepted,judge_id,sample_count\n");
  EXPECT_EQ(io::read_file(dir / "out" / "scatter.csv"), "norm_i,delta_wer,label\n");
  EXPECT_TRUE(res.warnings.empty());
  EXPECT_NE(io::read_file(dir / "out" / "hours.svg").find("<svg"), std::string::npos);
}

TEST(Report, HoursTableImportKeepsDeclaredTotals) {
  const auto t = load_hours_csv(fs::path(SPEECHBT_FIXTURES) / "hours_500k.csv");
  ASSERT_EQ(t.rows.size(), 10u);
  EXPECT_EQ(t.rows[7].language, "cs");
  EXPECT_EQ(t.rows[7].real_hours, 119.0);
  EXPECT_EQ(t.rows[7].synth_hours, 33312.0);
  EXPECT_EQ(t.declared_real_total, 14864.0);
  EXPECT_EQ(t.declared_synth_total, 505830.0);
  EXPECT_EQ(t.synth_total(), 505830.0);
  std::vector<std::string> warnings;
  const auto csv = hours_csv(t, &warnings);
  EXPECT_NE(csv.find("total_declared,14864,,505830,"), std::string::npos);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("14764"), std::string::npos);
}

TEST(Report, ManifestHoursSumInOrder) {
  HoursTable t = hours_from_plan({{"en", 10.0, 0.5, sched::ResourceTier::kLow}});
  std::vector<ManifestEntry> m;
  for (double d : {1.25, 2.5, 3600.0}) m.push_back({"u", "en", "t", "a", d, "p", "b", "e", 1, "g"});
  m.push_back({"v", "fr", "t", "a", 36.0, "p", "b", "e", 1, "g"});
  add_manifest(t, m);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].synth_hours, ((1.25 + 2.5) + 3600.0) / 3600.0);
  EXPECT_EQ(t.rows[0].utterances, 3u);
  EXPECT_EQ(t.rows[1].language, "fr");
  EXPECT_EQ(t.rows[1].synth_hours, 0.01);
}

// ---- end to end through the CLI ---------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + SPEECHBT_CLI + "' " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

// n distinct single-sentence documents drawn from a small vocabulary.
void write_corpus(const fs::path& path, const std::vector<std::string>& vocab, std::size_t n, std::uint64_t seed) {
  SplitMix64 g(seed);
  std::set<std::string> seen;
  std::ofstream out(path);
  while (seen.size() < n) {
    const std::size_t len = 5 + g.next_below(8);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) s += ' ';
      s += vocab[g.next_below(vocab.size())];
    }
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    s += '.';
    if (seen.insert(s).second) out << s << '\n';
  }
}

void write_prompts(const fs::path& path) {
  std::vector<json> rows;
  SplitMix64 g(3);
  for (int i = 0; i < 6; ++i) {
    std::vector<double> v;
    for (int k = 0; k < 8; ++k) v.push_back(g.next_unit() - 0.5);
    rows.push_back({{"prompt_id", "spk" + std::to_string(i)}, {"audio_ref", "p" + std::to_string(i) + ".wav"},
                    {"duration_s", 4.0 + i}, {"vector", v}});
  }
  io::write_jsonl(path, rows);
}

class EndToEnd : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch("e2e");
    write_corpus(root_ / "en.txt",
                 {"river", "stone", "market", "garden", "window", "evening", "teacher", "letter", "morning", "bridge"},
                 200, 1);
    write_corpus(root_ / "de.txt",
                 {"fluss", "stein", "markt", "garten", "fenster", "abend", "lehrer", "brief", "morgen", "dorf"}, 200, 2);
    write_prompts(root_ / "prompts.jsonl");
    io::write_file_atomic(root_ / "config.ini", R"([run]
seed = 7
[prompts]
pool = prompts.jsonl
[plan]
total_synth_hours = 0.2
[synth]
max_batch = 8
[gate]
eval_sentences = 30
[backend]
command = {self} mock-worker --cer 0.02 --audio-dir {audio_dir}
workers = 2
backoff_ms = 10
[language:en]
input = en.txt
real_hours = 100
real_wer = 0.1
[language:de]
input = de.txt
real_hours = 10
real_wer = 0.1
)");
  }

  static std::string run_args(const fs::path& dir, const std::string& extra = "") {
    return "run --config '" + (root_ / "config.ini").string() + "' --run-dir '" + dir.string() + "' " + extra;
  }

  static std::string manifest(const fs::path& dir) { return io::read_file(dir / "06-synth" / "manifest.jsonl"); }

  static const std::string& reference() {
    static const std::string m = [] {
      const auto dir = root_ / "ref";
      EXPECT_EQ(run_cli(run_args(dir)), 0);
      return manifest(dir);
    }();
    return m;
  }

  static fs::path root_;
};

fs::path EndToEnd::root_;

TEST_F(EndToEnd, ProducesManifestAndReport) {
  const auto& m = reference();
  const auto entries = read_manifest(root_ / "ref" / "06-synth" / "manifest.jsonl");
  ASSERT_FALSE(entries.empty());
  std::map<std::string, double> secs;
  std::set<std::string> ids;
  for (const auto& e : entries) {
    secs[e.language] += e.duration_s;
    EXPECT_TRUE(ids.insert(e.utt_id).second);
    EXPECT_TRUE(fs::exists(root_ / "ref" / e.audio_ref)) << e.audio_ref;
    EXPECT_TRUE(fs::exists(root_ / "ref" / e.gate_report_ref)) << e.gate_report_ref;
  }
  // Each language reaches its 0.1 h target, overshooting by less than one utterance.
  for (const auto& lang : {"en", "de"}) {
    EXPECT_GE(secs[lang], 360.0);
    EXPECT_LT(secs[lang], 360.0 + 20.0);
  }
  EXPECT_FALSE(m.empty());
  for (const auto* f : {"hours.csv", "gate.csv", "hours.svg", "norm_i_scatter.svg"})
    EXPECT_TRUE(fs::exists(root_ / "ref" / "08-report" / f)) << f;
  EXPECT_TRUE(fs::exists(root_ / "ref" / "07-pack" / "segments.jsonl"));
  EXPECT_FALSE(fs::exists(root_ / "ref" / "run.lock"));
}

TEST_F(EndToEnd, SecondRunDirectoryIsByteIdentical) {
  const auto dir = root_ / "second";
  ASSERT_EQ(run_cli(run_args(dir)), 0);
  EXPECT_EQ(manifest(dir), reference());
  EXPECT_EQ(io::read_file(dir / "08-report" / "hours.csv"), io::read_file(root_ / "ref" / "08-report" / "hours.csv"));
}

TEST_F(EndToEnd, ResumesAfterStoppingEarly) {
  const auto dir = root_ / "stopped";
  ASSERT_EQ(run_cli(run_args(dir, "--stop-after gate")), 0);
  EXPECT_TRUE(fs::exists(dir / "05-gate" / "DONE"));
  EXPECT_FALSE(fs::exists(dir / "06-synth"));
  ASSERT_EQ(run_cli("run --run-dir '" + dir.string() + "'"), 0);
  EXPECT_EQ(manifest(dir), reference());
}

TEST_F(EndToEnd, AbortedSynthesisResumesToSameManifest) {
  const auto dir = root_ / "aborted";
  EXPECT_EQ(run_cli(run_args(dir, "--fault-abort-after-batches 3")), 3);
  EXPECT_TRUE(fs::exists(dir / "error.json"));
  EXPECT_FALSE(fs::exists(dir / "06-synth" / "DONE"));
  EXPECT_FALSE(fs::exists(dir / "run.lock"));
  ASSERT_EQ(run_cli(run_args(dir)), 0);
  EXPECT_FALSE(fs::exists(dir / "error.json"));
  EXPECT_EQ(manifest(dir), reference());
}

TEST_F(EndToEnd, CrashingWorkerDoesNotChangeOutput) {
  const auto dir = root_ / "crashy";
  const std::string self = std::string("{self} mock-worker --cer 0.02 --audio-dir {audio_dir}");
  ASSERT_EQ(run_cli(run_args(dir, "--workers \"" + self + " --crash-after 2\" --workers \"" + self + "\"")), 0);
  EXPECT_EQ(manifest(dir), reference());
}

TEST_F(EndToEnd, ImpossibleThresholdGatesEverything) {
  const auto dir = root_ / "gated2";
  const std::string cmd = "SPEECHBT_GATE_THRESHOLD=3 '" + std::string(SPEECHBT_CLI) + "' " + run_args(dir) +
                          " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(st));
  EXPECT_EQ(WEXITSTATUS(st), 2);
  EXPECT_EQ(manifest(dir), "");
  const auto summary = json::parse(io::read_file(dir / "05-gate" / "summary.json"));
  EXPECT_FALSE(summary["en"]["accepted_any"].get<bool>());
  EXPECT_FALSE(summary["de"]["accepted_any"].get<bool>());
}

TEST_F(EndToEnd, ChangedConfigIsRefused) {
  const auto dir = root_ / "changed";
  ASSERT_EQ(run_cli(run_args(dir, "--stop-after prepare-text")), 0);
  EXPECT_EQ(run_cli(run_args(dir, "--seed 8")), 4);
  EXPECT_EQ(run_cli("run --run-dir '" + (root_ / "nowhere").string() + "'"), 4);
}

TEST_F(EndToEnd, StageNeedsItsInputs) {
  const auto dir = root_ / "order";
  ASSERT_EQ(run_cli("prepare-text --config '" + (root_ / "config.ini").string() + "' --run-dir '" + dir.string() + "'"),
            0);
  EXPECT_EQ(run_cli("synthesize --run-dir '" + dir.string() + "'"), 3);
  const auto err = json::parse(io::read_file(dir / "error.json"));
  EXPECT_EQ(err["code"], "MissingRunData");
}

TEST(RunLock, LiveHolderBlocksStaleOneIsTaken) {
  const auto dir = scratch("lock");
  {
    RunLock a(dir);
    EXPECT_THROW(RunLock b(dir), Error);
  }
  EXPECT_FALSE(fs::exists(dir / "run.lock"));
  io::write_file_atomic(dir / "run.lock", "999999999\n");
  EXPECT_NO_THROW(RunLock c(dir));
}

}  // namespace
}  // namespace speechbt::pipeline
