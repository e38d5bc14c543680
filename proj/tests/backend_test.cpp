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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "speechbt/backend/dispatch.hpp"
#include "speechbt/backend/journal.hpp"
#include "speechbt/backend/mock_engine.hpp"
#include "speechbt/backend/serve.hpp"
#include "speechbt/core/io.hpp"

namespace speechbt::backend {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("speechbt_backend_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

MockEngineConfig mock_config(const fs::path& audio, double cer = 0.0) {
  MockEngineConfig c;
  c.audio_dir = audio;
  c.char_error_rate = cer;
  c.seconds_per_char = 0.1;
  c.seed = 11;
  return c;
}

json synth_request(const std::string& rid, const std::vector<SynthItem>& items, std::uint64_t seed = 5,
                   const std::string& lang = "en") {
  return make_request(Op::kSynthesizeBatch, rid, synthesize_payload("prompts/p1.wav", lang, seed, items));
}

std::string worker_cmd(const std::string& extra = "") {
  return std::string("'") + SPEECHBT_CLI + "' mock-worker " + extra;
}

TEST(SplitMix64, ReferenceVector) {
  SplitMix64 g(0);
  EXPECT_EQ(g.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(g.next(), 0x6e789e6aa1b965f4ULL);
}

TEST(MockEngine, HelloAdvertisesWildcard) {
  MockEngine e(mock_config(scratch("hello")));
  const auto r = e.handle(hello_request("h1"));
  const auto caps = parse_hello_response(r, "h1");
  EXPECT_EQ(caps.languages, std::vector<std::string>{"*"});
  EXPECT_EQ(caps.max_batch, 64u);
  EXPECT_EQ(r["proto"], kProto);
}

TEST(MockEngine, DurationIsCharCountTimesRate) {
  MockEngine e(mock_config(scratch("dur")));
  const auto r = e.handle(synth_request("s1", {{"u1", "abcde"}}));
  EXPECT_EQ(r["status"], "ok");
  EXPECT_NEAR(r["results"][0]["duration_s"].get<double>(), 0.5, 1e-12);
}

TEST(MockEngine, NoiselessRoundTripIsExact) {
  const auto dir = scratch("noiseless");
  MockEngine e(mock_config(dir, 0.0));
  const std::string text = "Xin chào thế giới, Hello World!";
  const auto s = e.handle(synth_request("s1", {{"u1", text}}));
  const auto t = e.handle(make_request(Op::kTranscribeBatch, "t1",
                                       transcribe_payload("vi", {{"u1", s["results"][0]["audio_ref"]}})));
  EXPECT_EQ(t["status"], "ok");
  EXPECT_EQ(t["results"][0]["text"], text);
  const auto sidecar = json::parse(io::read_file(s["results"][0]["audio_ref"].get<std::string>()));
  for (const char* k : {"text_corrupted", "prompt_ref", "duration_s", "seed"}) EXPECT_TRUE(sidecar.contains(k)) << k;
}

TEST(MockEngine, CorruptionRateWithinOnePointAndStable) {
  const auto dir = scratch("rate");
  MockEngine e(mock_config(dir, 0.1));
  std::mt19937_64 rng(3);
  std::string text;
  while (text.size() < 10000) text.push_back(static_cast<char>('a' + rng() % 26));
  const auto item_seed = mock_item_seed(11, 5, "long");
  const auto out = corrupt_text(text, 0.1, item_seed);
  ASSERT_EQ(out.size(), text.size());
  std::size_t diff = 0;
  for (std::size_t i = 0; i < text.size(); ++i) diff += out[i] != text[i];
  EXPECT_NEAR(static_cast<double>(diff) / 10000.0, 0.1, 0.01);
  EXPECT_EQ(corrupt_text(text, 0.1, item_seed), out);
  // And through the engine: the sidecar carries the same string.
  const auto r = e.handle(synth_request("s", {{"long", text}}));
  const auto sidecar = json::parse(io::read_file(r["results"][0]["audio_ref"].get<std::string>()));
  EXPECT_EQ(sidecar["text_corrupted"], out);
}

TEST(MockEngine, CorruptionMatchesWrittenDefinition) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const auto len = rng() % 60;
    for (std::size_t i = 0; i < len; ++i) text.push_back("abcxyz ABC.,!? 019\t"[rng() % 19]);
    const double rate = (rng() % 11) / 10.0;
    const std::uint64_t cs = rng(), rs = rng();
    const std::string id = "item" + std::to_string(trial);
    ASSERT_EQ(corrupt_text(text, rate, mock_item_seed(cs, rs, id)),
              testing::corrupt_ascii_oracle(text, rate, cs, rs, id))
        << text;
  }
}

TEST(MockEngine, SameRequestTwiceIsByteIdentical) {
  const auto dir = scratch("twice");
  MockEngine a(mock_config(dir, 0.3)), b(mock_config(dir, 0.3));
  const auto req = synth_request("s9", {{"x", "one two three"}, {"y", "four five"}}).dump();
  EXPECT_EQ(response_line(a, req), response_line(a, req));
  EXPECT_EQ(response_line(a, req), response_line(b, req));
}

TEST(MockEngine, UnknownAudioRef) {
  const auto dir = scratch("unknown");
  MockEngine e(mock_config(dir));
  const auto s = e.handle(synth_request("s", {{"a", "hello"}}));
  const auto req = make_request(Op::kTranscribeBatch, "t",
                                transcribe_payload("en", {{"a", s["results"][0]["audio_ref"]}, {"b", "/nonexistent"}}));
  const auto r = e.handle(req);
  EXPECT_EQ(r["status"], "partial");
  EXPECT_EQ(r["error"]["code"], "UnknownAudioRef");
  EXPECT_EQ(r["error"]["item_ids"], json({"b"}));
  EXPECT_NO_THROW(check_batch_response(req, r));
  const auto all_bad = make_request(Op::kTranscribeBatch, "t2", transcribe_payload("en", {{"c", "nope"}}));
  EXPECT_EQ(e.handle(all_bad)["status"], "error");
}

TEST(Protocol, ConservationHoldsOnRandomBatches) {
  const auto dir = scratch("fuzz");
  MockEngineConfig cfg = mock_config(dir, 0.2);
  cfg.max_batch = 12;
  cfg.languages = {"en", "vi"};
  MockEngine e(cfg);
  std::mt19937_64 rng(77);
  std::vector<std::string> refs{"/nonexistent"};
  const std::vector<std::string> langs{"en", "vi", "fr", "en-US"};
  for (int trial = 0; trial < 500; ++trial) {
    const std::string rid = "r" + std::to_string(trial);
    const auto n = 1 + rng() % 16;
    const auto lang = langs[rng() % langs.size()];
    json req;
    if (rng() % 2) {
      std::vector<SynthItem> items;
      for (std::size_t i = 0; i < n; ++i) items.push_back({"i" + std::to_string(i), std::string(rng() % 30, 'q')});
      req = synth_request(rid, items, rng(), lang);
    } else {
      std::vector<TranscribeItem> items;
      for (std::size_t i = 0; i < n; ++i) items.push_back({"i" + std::to_string(i), refs[rng() % refs.size()]});
      req = make_request(Op::kTranscribeBatch, rid, transcribe_payload(lang, items));
    }
    const auto resp = json::parse(response_line(e, req.dump()));
    ASSERT_NO_THROW(check_batch_response(req, resp)) << req.dump() << "\n" << resp.dump();
    if (resp.contains("results"))
      for (const auto& r : resp["results"])
        if (r.contains("audio_ref")) refs.push_back(r["audio_ref"]);
  }
}

TEST(Protocol, CheckerRejectsBrokenResponses) {
  const json req = synth_request("q", {{"a", "x"}, {"b", "y"}});
  json missing = {{"request_id", "q"}, {"status", "ok"}, {"results", {{{"id", "a"}}}}};
  EXPECT_THROW(check_batch_response(req, missing), Error);
  json twice = {{"request_id", "q"},
                {"status", "partial"},
                {"results", {{{"id", "a"}}, {{"id", "b"}}}},
                {"error", {{"code", "X"}, {"message", ""}, {"item_ids", {"a"}}}}};
  EXPECT_THROW(check_batch_response(req, twice), Error);
  json wrong_id = {{"request_id", "other"}, {"status", "ok"}, {"results", {{{"id", "a"}}, {{"id", "b"}}}}};
  EXPECT_THROW(check_batch_response(req, wrong_id), Error);
}

TEST(Serve, MalformedLinesGetOneErrorEachAndSessionSurvives) {
  MockEngine e(mock_config(scratch("malformed")));
  std::istringstream in(
      "this is not json\n"
      "[1,2,3]\n"
      "{\"op\":\"teleport\",\"request_id\":\"u1\"}\n"
      "{\"op\":\"synthesize_batch\",\"request_id\":\"u2\",\"payload\":{\"items\":[]}}\n"
      "{\"op\":\"synthesize_batch\",\"request_id\":\"u3\",\"payload\":{\"language\":\"en\",\"prompt_ref\":\"p\","
      "\"seed\":1,\"items\":[{\"id\":\"a\",\"text\":\"x\"},{\"id\":\"a\",\"text\":\"y\"}]}}\n"
      "{\"request_id\":\"u4\"}\n"
      "{\"op\":\"hello\",\"request_id\":\"h\",\"proto\":\"speechbt.backend.v1\"}\n"
      "{\"op\":\"shutdown\",\"request_id\":\"bye\"}\n"
      "{\"op\":\"hello\",\"request_id\":\"after\"}\n");
  std::ostringstream out;
  EXPECT_EQ(serve(in, out, e), ServeExit::kShutdown);
  std::vector<json> lines;
  std::istringstream back(out.str());
  for (std::string l; std::getline(back, l);) lines.push_back(json::parse(l));
  ASSERT_EQ(lines.size(), 8u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(lines[i]["status"], "error") << i;
  EXPECT_EQ(lines[0]["request_id"], nullptr);
  EXPECT_EQ(lines[2]["error"]["code"], "UnknownOp");
  EXPECT_EQ(lines[3]["error"]["code"], "MalformedPayload");
  EXPECT_EQ(lines[5]["request_id"], "u4");
  EXPECT_EQ(lines[6]["status"], "ok");
  EXPECT_EQ(lines[7]["request_id"], "bye");
}

// The shared golden corpus: requests replayed against the mock must give the
// recorded response bytes, both in process and through the worker binary.
class Golden : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch("golden");
    old_ = fs::current_path();
    fs::current_path(dir_);
  }
  void TearDown() override { fs::current_path(old_); }

  static MockEngineConfig engine_config() {
    const auto j = json::parse(io::read_file(fs::path(SPEECHBT_GOLDEN_DIR) / "engine.json"));
    MockEngineConfig c;
    c.char_error_rate = j.at("char_error_rate");
    c.seconds_per_char = j.at("seconds_per_char");
    c.seed = j.at("seed");
    c.audio_dir = j.at("audio_dir").get<std::string>();
    c.engine_id = j.at("engine_id");
    c.max_batch = j.at("max_batch");
    c.languages = j.at("languages").get<std::vector<std::string>>();
    return c;
  }

  static std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::istringstream in(io::read_file(p));
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  fs::path dir_, old_;
};

TEST_F(Golden, InProcessReplayIsByteIdentical) {
  const fs::path g(SPEECHBT_GOLDEN_DIR);
  const auto requests = lines(g / "requests.jsonl");
  const auto expected = lines(g / "responses.jsonl");
  ASSERT_EQ(requests.size(), 20u);
  ASSERT_EQ(expected.size(), requests.size());
  MockEngine e(engine_config());
  for (std::size_t i = 0; i < requests.size(); ++i) EXPECT_EQ(response_line(e, requests[i]), expected[i]) << i;
}

TEST_F(Golden, WorkerProcessReplayIsByteIdentical) {
  const fs::path g(SPEECHBT_GOLDEN_DIR);
  const auto c = engine_config();
  std::ostringstream cmd;
  cmd << "'" << SPEECHBT_CLI << "' mock-worker --cer " << c.char_error_rate << " --seconds-per-char "
      << c.seconds_per_char << " --seed " << c.seed << " --audio-dir " << c.audio_dir.string() << " --max-batch " << c.max_batch
      << " --engine-id " << c.engine_id << " < '"
      << (g / "requests.jsonl").string() << "' > replay.jsonl";
  ASSERT_EQ(std::system(cmd.str().c_str()), 0);
  EXPECT_EQ(io::read_file("replay.jsonl"), io::read_file(g / "responses.jsonl"));
}

TEST(Handshake, MalformedFirstLineIsProtocolError) {
  WorkerProcess p("exec echo definitely-not-json");
  try {
    detail::handshake(p, "h", std::chrono::milliseconds(5000));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocolError);
  }
}

TEST(Handshake, SilentWorkerTimesOut) {
  WorkerProcess p("exec sleep 5");
  try {
    detail::handshake(p, "h", std::chrono::milliseconds(200));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeout);
  }
  p.kill_now();
}

std::vector<Job> synth_jobs(std::size_t n, std::size_t items_each, const std::string& lang = "en") {
  std::vector<Job> jobs;
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<SynthItem> items;
    for (std::size_t i = 0; i < items_each; ++i)
      items.push_back({"s" + std::to_string(b) + "_" + std::to_string(i), "sentence " + std::to_string(b * 100 + i)});
    jobs.push_back({"b" + std::to_string(b), Op::kSynthesizeBatch, synthesize_payload("p.wav", lang, b, items)});
  }
  return jobs;
}

DispatchOptions fast() {
  DispatchOptions o;
  o.backoff = std::chrono::milliseconds(5);
  o.request_timeout = std::chrono::milliseconds(20000);
  return o;
}

TEST(Dispatch, OneWorkerTenBatches) {
  const auto dir = scratch("d1");
  ResultJournal journal(dir / "journal.jsonl");
  std::set<std::string> done;
  const auto stats = dispatch(synth_jobs(10, 3), {worker_cmd("--audio-dir " + (dir / "audio").string())},
                              [&](const Job& j, const json& r, const Capabilities&) {
                                for (const auto& it : r["results"]) journal.record(j.job_id, it["id"], it);
                                done.insert(j.job_id);
                              },
                              fast());
  EXPECT_EQ(stats.completed, 10u);
  EXPECT_EQ(done.size(), 10u);
  EXPECT_EQ(journal.size(), 30u);
}

TEST(Dispatch, ZeroWorkers) {
  try {
    dispatch(synth_jobs(2, 1), {}, [](const Job&, const json&, const Capabilities&) {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllWorkersFailed);
  }
}

TEST(Dispatch, MalformedHandshakeQuarantinesWorker) {
  try {
    dispatch(synth_jobs(2, 1), {"echo garbage; cat > /dev/null"}, [](const Job&, const json&, const Capabilities&) {},
             fast());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllWorkersFailed);
    EXPECT_NE(std::string(e.what()).find("ProtocolError"), std::string::npos) << e.what();
  }
}

TEST(Dispatch, RoutingRespectsMaxBatchAndLanguages) {
  const auto dir = scratch("route");
  const std::string audio = " --audio-dir " + (dir / "audio").string();
  auto jobs = synth_jobs(6, 8);
  for (auto& j : synth_jobs(6, 3)) {
    j.job_id += "-small";
    jobs.push_back(j);
  }
  for (auto& j : synth_jobs(4, 2, "vi")) {
    j.job_id += "-vi";
    jobs.push_back(j);
  }
  std::map<std::string, std::size_t> max_seen;
  std::set<std::string> vi_engines;
  dispatch(jobs,
           {worker_cmd("--max-batch 4 --engine-id small --languages en,vi" + audio),
            worker_cmd("--engine-id big --languages en" + audio)},
           [&](const Job& j, const json&, const Capabilities& caps) {
             max_seen[caps.engine_id] = std::max(max_seen[caps.engine_id], j.item_count());
             if (j.language() == "vi") vi_engines.insert(caps.engine_id);
           },
           fast());
  EXPECT_LE(max_seen["small"], 4u);
  EXPECT_EQ(max_seen["big"], 8u);
  EXPECT_EQ(vi_engines, std::set<std::string>{"small"});
}

TEST(Dispatch, IncompatibleBatchLeavesAllWorkersFailed) {
  const auto dir = scratch("incompat");
  try {
    dispatch(synth_jobs(1, 5), {worker_cmd("--max-batch 2 --audio-dir " + (dir / "a").string())},
             [](const Job&, const json&, const Capabilities&) {}, fast());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllWorkersFailed);
  }
}

TEST(Dispatch, KilledWorkerBatchIsReassignedWithoutGapsOrDuplicates) {
  const auto dir = scratch("kill");
  const std::string audio = " --audio-dir " + (dir / "audio").string();
  ResultJournal journal(dir / "journal.jsonl");
  std::size_t deliveries_seen = 0;
  const auto jobs = synth_jobs(40, 4);
  const auto stats = dispatch(jobs, {worker_cmd("--crash-after 3" + audio), worker_cmd(audio)},
                              [&](const Job& j, const json& r, const Capabilities&) {
                                ++deliveries_seen;
                                for (const auto& it : r["results"]) journal.record(j.job_id, it["id"], it);
                              },
                              fast());
  EXPECT_EQ(stats.completed, 40u);
  EXPECT_GE(stats.retries, 1u);
  EXPECT_GE(stats.respawns, 1u);
  std::set<std::pair<std::string, std::string>> expected, got;
  for (const auto& j : jobs)
    for (const auto& id : request_item_ids({{"payload", j.payload}})) expected.emplace(j.job_id, id);
  for (const auto& row : io::read_jsonl(journal.path())) {
    ASSERT_TRUE(got.emplace(row["batch_id"], row["item_id"]).second) << "duplicate " << row.dump();
  }
  EXPECT_EQ(got, expected);
}

TEST(Dispatch, RedeliveryIsRecordedOnce) {
  const auto dir = scratch("redeliver");
  ResultJournal j(dir / "j.jsonl");
  EXPECT_TRUE(j.record("b1", "s1", 1));
  EXPECT_FALSE(j.record("b1", "s1", 2));
  EXPECT_TRUE(j.record("b1", "s2", 3));
  EXPECT_EQ(j.size(), 2u);
}

TEST(Dispatch, CrashingWorkersAloneAreQuarantined) {
  const auto dir = scratch("allcrash");
  try {
    dispatch(synth_jobs(3, 1), {worker_cmd("--crash-after 0 --audio-dir " + (dir / "a").string())},
             [](const Job&, const json&, const Capabilities&) {}, fast());
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::kAllWorkersFailed || e.code() == ErrorCode::kBatchFailed) << e.what();
  }
}

TEST(Journal, TornTailIsDroppedOnReopen) {
  const auto dir = scratch("torn");
  {
    ResultJournal j(dir / "j.jsonl");
    j.record("b", "1", 1);
    j.record("b", "2", 2);
  }
  {
    std::ofstream out(dir / "j.jsonl", std::ios::app);
    out << "{\"batch_id\":\"b\",\"item_id\":\"3\",\"va";
  }
  ResultJournal j(dir / "j.jsonl");
  EXPECT_EQ(j.size(), 2u);
  EXPECT_FALSE(j.contains("b", "3"));
  EXPECT_TRUE(j.record("b", "3", 3));
  EXPECT_EQ(io::read_jsonl(dir / "j.jsonl").size(), 3u);
}

TEST(Journal, DamageBeforeTheTailIsAnError) {
  const auto dir = scratch("damaged");
  io::write_file_atomic(dir / "j.jsonl", "garbage\n{\"batch_id\":\"b\",\"item_id\":\"1\",\"value\":1}\n");
  EXPECT_THROW(ResultJournal(dir / "j.jsonl"), Error);
}

}  // namespace
}  // namespace speechbt::backend
