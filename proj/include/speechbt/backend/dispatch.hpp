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

// Fans batch jobs out to a pool of protocol workers. One thread owns each
// worker process. Delivery is at-least-once: a job whose worker dies, times
// out or answers garbage goes back on the queue, and the worker is respawned
// with exponential backoff. A worker that fails max_attempts times in a row,
// or whose handshake is malformed, is quarantined. A job gets max_attempts
// tries. Responses reach the sink one at a time, so the sink needs no
// locking of its own.

#include <signal.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/backend/protocol.hpp"
#include "speechbt/backend/subprocess.hpp"
#include "speechbt/core/error.hpp"

namespace speechbt::backend {

struct Job {
  std::string job_id;
  Op op = Op::kSynthesizeBatch;
  json payload;

  std::string language() const { return payload.value("language", ""); }
  std::size_t item_count() const { return payload.contains("items") ? payload["items"].size() : 0; }
};

struct DispatchOptions {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{100};
  std::chrono::milliseconds handshake_timeout{10000};
  std::chrono::milliseconds request_timeout{300000};
};

struct DispatchStats {
  std::size_t completed = 0;
  std::size_t deliveries = 0;
  std::size_t retries = 0;
  std::size_t respawns = 0;
  std::vector<std::string> quarantined;
};

// Called with every well-formed batch response, including partial and error
// ones. A job counts as done only when the status is "ok".
using ResponseSink = std::function<void(const Job&, const json& response, const Capabilities&)>;

namespace detail {

struct Pending {
  Job job;
  int attempts = 0;
};

class DispatchState {
 public:
  DispatchState(std::vector<Job> jobs, const DispatchOptions& opts) : opts_(opts) {
    for (auto& j : jobs) queue_.push_back({std::move(j), 0});
  }

  // Blocks until a job this worker can take is queued. Returns false when
  // none ever will be.
  bool take(const Capabilities& caps, Pending& out) {
    std::unique_lock lock(mu_);
    for (;;) {
      if (aborted_) return false;
      auto it = std::find_if(queue_.begin(), queue_.end(),
                             [&](const Pending& p) { return caps.can_take(p.job.language(), p.job.item_count()); });
      if (it != queue_.end()) {
        out = std::move(*it);
        queue_.erase(it);
        ++in_flight_;
        return true;
      }
      if (in_flight_ == 0) return false;
      cv_.wait(lock);
    }
  }

  bool has_work() {
    std::lock_guard lock(mu_);
    return !aborted_ && (!queue_.empty() || in_flight_ > 0);
  }

  void done() {
    std::lock_guard lock(mu_);
    --in_flight_;
    ++stats_.completed;
    cv_.notify_all();
  }

  void retry(Pending p, const std::string& why) {
    std::lock_guard lock(mu_);
    --in_flight_;
    ++p.attempts;
    if (p.attempts >= opts_.max_attempts) {
      failed_.push_back(p.job.job_id + " (" + why + ")");
    } else {
      ++stats_.retries;
      queue_.push_back(std::move(p));
    }
    cv_.notify_all();
  }

  void quarantine(const std::string& who) {
    std::lock_guard lock(mu_);
    stats_.quarantined.push_back(who);
    cv_.notify_all();
  }

  void abort(std::exception_ptr e) {
    std::lock_guard lock(mu_);
    if (!error_) error_ = e;
    aborted_ = true;
    cv_.notify_all();
  }

  void count_delivery() {
    std::lock_guard lock(mu_);
    ++stats_.deliveries;
  }

  void count_respawn() {
    std::lock_guard lock(mu_);
    ++stats_.respawns;
  }

  void deliver(const ResponseSink& sink, const Job& job, const json& resp, const Capabilities& caps) {
    std::lock_guard lock(sink_mu_);
    sink(job, resp, caps);
  }

  DispatchStats finish() {
    if (error_) std::rethrow_exception(error_);
    if (!queue_.empty()) {
      std::string who;
      for (const auto& q : stats_.quarantined) who += " [" + q + "]";
      throw Error(ErrorCode::kAllWorkersFailed,
                  std::to_string(queue_.size()) + " batches left with no live capable worker;" + who);
    }
    if (!failed_.empty()) {
      std::string list;
      for (const auto& f : failed_) list += " " + f;
      throw Error(ErrorCode::kBatchFailed, std::to_string(failed_.size()) + " batches exhausted retries:" + list);
    }
    return stats_;
  }

 private:
  DispatchOptions opts_;
  std::mutex mu_;
  std::mutex sink_mu_;
  std::condition_variable cv_;
  std::deque<Pending> queue_;
  std::size_t in_flight_ = 0;
  std::vector<std::string> failed_;
  DispatchStats stats_;
  bool aborted_ = false;
  std::exception_ptr error_;
};

inline std::chrono::milliseconds backoff_for(const DispatchOptions& o, int failures) {
  const int shift = std::clamp(failures - 1, 0, 16);
  return o.backoff * (1 << shift);
}

inline Capabilities handshake(WorkerProcess& proc, const std::string& request_id, std::chrono::milliseconds timeout) {
  if (!proc.send_line(hello_request(request_id).dump())) {
    throw Error(ErrorCode::kProtocolError, "worker closed stdin before hello");
  }
  const auto line = proc.read_line(timeout);
  if (!line) throw Error(ErrorCode::kProtocolError, "worker exited before hello reply");
  json reply;
  try {
    reply = json::parse(*line);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::kProtocolError, "hello reply is not JSON");
  }
  return parse_hello_response(reply, request_id);
}

inline void run_worker(std::size_t index, const std::string& command, DispatchState& st, const DispatchOptions& opts,
                       const ResponseSink& sink) {
  const std::string name = "worker" + std::to_string(index) + ": " + command;
  std::unique_ptr<WorkerProcess> proc;
  Capabilities caps;
  int failures = 0;
  int spawns = 0;
  try {
    for (;;) {
      if (!proc) {
        if (!st.has_work()) return;
        if (failures >= opts.max_attempts) {
          st.quarantine(name + " (failed " + std::to_string(failures) + " times)");
          return;
        }
        if (failures > 0) std::this_thread::sleep_for(backoff_for(opts, failures));
        if (spawns++ > 0) st.count_respawn();
        try {
          proc = std::make_unique<WorkerProcess>("exec " + command);
          caps = handshake(*proc, "hello#" + std::to_string(index) + "#" + std::to_string(spawns), opts.handshake_timeout);
        } catch (const Error& e) {
          proc.reset();
          if (e.code() == ErrorCode::kProtocolError) {
            st.quarantine(name + " (" + e.what() + ")");
            return;
          }
          ++failures;
          continue;
        }
      }

      Pending p;
      if (!st.take(caps, p)) break;
      if (p.attempts > 0) std::this_thread::sleep_for(backoff_for(opts, p.attempts));
      const json request = make_request(p.job.op, p.job.job_id + "#" + std::to_string(p.attempts + 1), p.job.payload);
      st.count_delivery();

      json resp;
      std::string fault;
      try {
        if (!proc->send_line(request.dump())) throw Error(ErrorCode::kProtocolError, "worker pipe closed");
        const auto line = proc->read_line(opts.request_timeout);
        if (!line) throw Error(ErrorCode::kProtocolError, "worker exited mid-batch");
        try {
          resp = json::parse(*line);
        } catch (const json::parse_error&) {
          throw Error(ErrorCode::kProtocolError, "reply is not JSON");
        }
        check_batch_response(request, resp);
      } catch (const Error& e) {
        fault = e.what();
      }
      if (!fault.empty()) {
        proc->kill_now();
        proc.reset();
        ++failures;
        st.retry(std::move(p), fault);
        continue;
      }
      failures = 0;
      st.deliver(sink, p.job, resp, caps);
      if (resp["status"] == "ok") {
        st.done();
      } else {
        st.retry(std::move(p), "status " + resp["status"].get<std::string>());
      }
    }
    if (proc) {
      if (proc->send_line(shutdown_request("shutdown#" + std::to_string(index)).dump())) {
        try {
          (void)proc->read_line(std::chrono::milliseconds(2000));
        } catch (const Error&) {
        }
      }
      proc->terminate(std::chrono::milliseconds(2000));
    }
  } catch (...) {
    st.abort(std::current_exception());
  }
}

}  // namespace detail

// Runs every job to completion on the given worker commands. Throws
// AllWorkersFailed when jobs remain and no live worker can take them, and
// BatchFailed when some job used up its attempts. Exceptions thrown by the
// sink stop all workers and propagate.
inline DispatchStats dispatch(std::vector<Job> jobs, const std::vector<std::string>& worker_commands,
                              const ResponseSink& sink, const DispatchOptions& opts = {}) {
  if (worker_commands.empty()) throw Error(ErrorCode::kAllWorkersFailed, "no workers configured");
  if (opts.max_attempts < 1) throw Error(ErrorCode::kConfigError, "max_attempts must be at least 1");
  // A dead worker must surface as a failed write, not kill this process.
  ::signal(SIGPIPE, SIG_IGN);
  detail::DispatchState st(std::move(jobs), opts);
  std::vector<std::thread> threads;
  threads.reserve(worker_commands.size());
  for (std::size_t i = 0; i < worker_commands.size(); ++i) {
    threads.emplace_back(detail::run_worker, i, std::cref(worker_commands[i]), std::ref(st), std::cref(opts),
                         std::cref(sink));
  }
  for (auto& t : threads) t.join();
  return st.finish();
}

}  // namespace speechbt::backend
