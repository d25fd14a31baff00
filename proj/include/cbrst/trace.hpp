#pragma once

// Run artifacts: per-message completion records, per-class packet counters,
// and windowed throughput samples, with CSV in/out.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cbrst/common.hpp"

namespace cbrst::sim {

enum class MsgStatus { kOk, kFailed, kLostRequest, kUnresolved };

inline const char* to_string(MsgStatus s) {
  switch (s) {
    case MsgStatus::kOk: return "ok";
    case MsgStatus::kFailed: return "failed";
    case MsgStatus::kLostRequest: return "lost_request";
    default: return "unresolved";
  }
}

struct MessageRecord {
  std::uint64_t uid = 0;
  std::uint32_t src = 0, dst = 0;
  std::uint64_t size = 0;
  std::uint32_t k = 0;
  Nanos requested = -1;  // request issue time (-1: direct submission)
  Nanos started = -1;    // responder began bursting
  Nanos completed = -1;  // receiver finished decoding (+ en/decode charge)
  MsgStatus status = MsgStatus::kUnresolved;
  std::uint64_t symbols_sent = 0;
  std::uint64_t symbols_received = 0;

  Nanos mct() const {
    return (started >= 0 && completed >= 0) ? completed - started : -1;
  }
};

struct ClassCounters {
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_queue = 0;
  std::uint64_t dropped_linkdown = 0;
  std::uint64_t marked = 0;
  std::int64_t in_flight = 0;
};

struct ThroughputSample {
  std::string flow;  // "bg:<id>", "class:background", "class:cloudburst"
  std::uint64_t window = 0;
  std::uint64_t bytes = 0;
};

struct TraceLog {
  std::vector<MessageRecord> messages;
  std::map<std::string, ClassCounters> counters;  // by class name
  std::vector<ThroughputSample> throughput;
  Nanos throughput_window = 100 * kMilli;
  Nanos max_cb_hop_queue_delay = 0;
  Nanos end_time = 0;

  std::string messages_csv() const {
    std::ostringstream os;
    os << "uid,src,dst,size,k,requested_ns,started_ns,completed_ns,mct_ns,"
          "status,symbols_sent,symbols_received\n";
    for (const auto& m : messages) {
      os << m.uid << ',' << m.src << ',' << m.dst << ',' << m.size << ','
         << m.k << ',' << m.requested << ',' << m.started << ','
         << m.completed << ',' << m.mct() << ',' << to_string(m.status) << ','
         << m.symbols_sent << ',' << m.symbols_received << '\n';
    }
    return os.str();
  }

  std::string counters_csv() const {
    std::ostringstream os;
    os << "class,injected,delivered,dropped_queue,dropped_linkdown,marked,"
          "in_flight_end\n";
    for (const auto& [name, c] : counters)
      os << name << ',' << c.injected << ',' << c.delivered << ','
         << c.dropped_queue << ',' << c.dropped_linkdown << ',' << c.marked
         << ',' << c.in_flight << '\n';
    os << "max_cb_hop_queue_delay_ns," << max_cb_hop_queue_delay << ",,,,,\n";
    return os.str();
  }

  std::string throughput_csv() const {
    std::ostringstream os;
    os << "flow,window,window_start_ns,bytes\n";
    for (const auto& t : throughput)
      os << t.flow << ',' << t.window << ','
         << static_cast<std::int64_t>(t.window) * throughput_window << ','
         << t.bytes << '\n';
    return os.str();
  }

  void write(const std::string& dir) const {
    std::ofstream(dir + "/trace.csv") << messages_csv();
    std::ofstream(dir + "/counters.csv") << counters_csv();
    std::ofstream(dir + "/throughput.csv") << throughput_csv();
  }
};

// Parse a trace.csv produced by TraceLog::messages_csv (used by summarize).
inline std::vector<MessageRecord> read_messages_csv(std::istream& in) {
  std::vector<MessageRecord> out;
  std::string line;
  std::getline(in, line);  // header
  auto num = [](const std::string& s) -> std::int64_t {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    (void)res;
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() < 12) continue;
    MessageRecord m;
    m.uid = static_cast<std::uint64_t>(num(f[0]));
    m.src = static_cast<std::uint32_t>(num(f[1]));
    m.dst = static_cast<std::uint32_t>(num(f[2]));
    m.size = static_cast<std::uint64_t>(num(f[3]));
    m.k = static_cast<std::uint32_t>(num(f[4]));
    m.requested = num(f[5]);
    m.started = num(f[6]);
    m.completed = num(f[7]);
    m.status = f[9] == "ok"             ? MsgStatus::kOk
               : f[9] == "failed"       ? MsgStatus::kFailed
               : f[9] == "lost_request" ? MsgStatus::kLostRequest
                                        : MsgStatus::kUnresolved;
    m.symbols_sent = static_cast<std::uint64_t>(num(f[10]));
    m.symbols_received = static_cast<std::uint64_t>(num(f[11]));
    out.push_back(m);
  }
  return out;
}

}  // namespace cbrst::sim
