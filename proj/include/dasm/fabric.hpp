#pragma once

#include "dasm/linalg.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dasm {

class FabricError : public Error {
 public:
  using Error::Error;
};

enum class Phase : std::size_t { Init = 0, Dcg = 1, Asm = 2, Admm = 3 };
inline constexpr std::size_t kPhaseCount = 4;

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Init: return "init";
    case Phase::Dcg: return "dcg";
    case Phase::Asm: return "asm";
    case Phase::Admm: return "admm";
  }
  return "?";
}

struct TrafficCount {
  std::uint64_t global_floats = 0;
  std::uint64_t global_booleans = 0;
  std::uint64_t local_floats = 0;

  TrafficCount& operator+=(const TrafficCount& o) {
    global_floats += o.global_floats;
    global_booleans += o.global_booleans;
    local_floats += o.local_floats;
    return *this;
  }
  friend TrafficCount operator+(TrafficCount a, const TrafficCount& b) { return a += b; }
  friend TrafficCount operator-(const TrafficCount& a, const TrafficCount& b) {
    return {a.global_floats - b.global_floats, a.global_booleans - b.global_booleans, a.local_floats - b.local_floats};
  }
  friend bool operator==(const TrafficCount&, const TrafficCount&) = default;
};

/// Monotone traffic counters, split by phase.
class CommLedger {
 public:
  const TrafficCount& phase(Phase p) const { return by_phase_[static_cast<std::size_t>(p)]; }
  TrafficCount total() const {
    TrafficCount t;
    for (const auto& c : by_phase_) t += c;
    return t;
  }

  void charge_global_floats(Phase p, std::uint64_t n) { by_phase_[static_cast<std::size_t>(p)].global_floats += n; }
  void charge_global_booleans(Phase p, std::uint64_t n) { by_phase_[static_cast<std::size_t>(p)].global_booleans += n; }
  void charge_local_floats(Phase p, std::uint64_t n) { by_phase_[static_cast<std::size_t>(p)].local_floats += n; }

  friend bool operator==(const CommLedger&, const CommLedger&) = default;

 private:
  std::array<TrafficCount, kPhaseCount> by_phase_{};
};

struct Envelope {
  Index from = 0;
  Index to = 0;
  std::vector<double> payload;
};

/// Message-transport boundary between agents. The simulator delivers in process;
/// a networked implementation only has to honor the same ordering.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Delivers every envelope; the result is grouped by recipient, then sender.
  virtual std::vector<std::vector<Envelope>> route(std::vector<Envelope> outbox, Index agents) = 0;
};

class InProcessTransport final : public Transport {
 public:
  std::vector<std::vector<Envelope>> route(std::vector<Envelope> outbox, Index agents) override {
    std::vector<std::vector<Envelope>> inbox(static_cast<std::size_t>(agents));
    std::stable_sort(outbox.begin(), outbox.end(), [](const Envelope& a, const Envelope& b) { return a.from < b.from; });
    for (auto& e : outbox) inbox[static_cast<std::size_t>(e.to)].push_back(std::move(e));
    return inbox;
  }
};

/// Tracks which participants have posted in the current round.
class RoundBarrier {
 public:
  explicit RoundBarrier(Index participants) : posted_(static_cast<std::size_t>(participants), false) {}

  void post(Index agent) {
    std::lock_guard lock(mutex_);
    if (agent < 0 || agent >= static_cast<Index>(posted_.size())) throw FabricError("barrier: unknown participant " + std::to_string(agent));
    if (posted_[agent]) throw FabricError("barrier: participant " + std::to_string(agent) + " posted twice in round " + std::to_string(round_));
    posted_[agent] = true;
  }

  bool complete() const {
    std::lock_guard lock(mutex_);
    return std::all_of(posted_.begin(), posted_.end(), [](bool b) { return b; });
  }

  IndexList missing() const {
    std::lock_guard lock(mutex_);
    IndexList out;
    for (std::size_t i = 0; i < posted_.size(); ++i)
      if (!posted_[i]) out.push_back(static_cast<Index>(i));
    return out;
  }

  /// Closes the round. Throws if a participant never posted.
  void advance() {
    if (!complete()) {
      std::string ids;
      for (Index i : missing()) ids += (ids.empty() ? "" : ",") + std::to_string(i);
      throw FabricError("barrier: round " + std::to_string(round_) + " incomplete, missing participant(s) " + ids);
    }
    std::lock_guard lock(mutex_);
    std::fill(posted_.begin(), posted_.end(), false);
    ++round_;
  }

  std::uint64_t round() const {
    std::lock_guard lock(mutex_);
    return round_;
  }

  /// Abandons the current round without advancing.
  void reset() {
    std::lock_guard lock(mutex_);
    std::fill(posted_.begin(), posted_.end(), false);
  }

 private:
  mutable std::mutex mutex_;
  std::vector<bool> posted_;
  std::uint64_t round_ = 0;
};

/// Coordinator and neighbor channels with traffic metering. Every collective
/// reduces in ascending agent id so results are schedule independent.
class Fabric {
 public:
  struct MinResult {
    double value = std::numeric_limits<double>::infinity();
    Index agent = -1;
  };

  using LinkSizes = std::map<std::pair<Index, Index>, Index>;

  explicit Fabric(Index agents, std::unique_ptr<Transport> transport = std::make_unique<InProcessTransport>())
      : agents_(agents), transport_(std::move(transport)), barrier_(agents) {
    if (agents < 1) throw FabricError("fabric needs at least one agent");
  }

  Index agents() const { return agents_; }
  const CommLedger& ledger() const { return ledger_; }
  Phase phase() const { return phase_; }
  void set_phase(Phase p) { phase_ = p; }

  class PhaseScope {
   public:
    PhaseScope(Fabric& f, Phase p) : fabric_(f), saved_(f.phase()) { f.set_phase(p); }
    ~PhaseScope() { fabric_.set_phase(saved_); }
    PhaseScope(const PhaseScope&) = delete;
    PhaseScope& operator=(const PhaseScope&) = delete;

   private:
    Fabric& fabric_;
    Phase saved_;
  };

  /// Each agent sends K scalars up and receives K sums back: 2*M*K global floats.
  template <std::size_t K>
  std::array<double, K> global_sum(std::span<const std::array<double, K>> contributions) {
    collect(contributions.size());
    std::array<double, K> sum{};
    for (const auto& c : contributions)
      for (std::size_t k = 0; k < K; ++k) sum[k] += c[k];
    ledger_.charge_global_floats(phase_, 2 * static_cast<std::uint64_t>(agents_) * K);
    return sum;
  }

  double global_sum(std::span<const double> contributions) {
    collect(contributions.size());
    double sum = 0.0;
    for (double c : contributions) sum += c;
    ledger_.charge_global_floats(phase_, 2 * static_cast<std::uint64_t>(agents_));
    return sum;
  }

  /// Smallest value and the lowest agent id attaining it: 2*M global floats.
  MinResult global_min(std::span<const double> contributions) {
    collect(contributions.size());
    MinResult best;
    for (std::size_t i = 0; i < contributions.size(); ++i) {
      if (best.agent < 0 || contributions[i] < best.value) best = {contributions[i], static_cast<Index>(i)};
    }
    ledger_.charge_global_floats(phase_, 2 * static_cast<std::uint64_t>(agents_));
    return best;
  }

  /// AND of one flag per agent, broadcast back: 2*M global booleans.
  bool global_all(const std::vector<bool>& flags) {
    collect(flags.size());
    const bool all = std::all_of(flags.begin(), flags.end(), [](bool b) { return b; });
    ledger_.charge_global_booleans(phase_, 2 * static_cast<std::uint64_t>(agents_));
    return all;
  }

  /// Neighbor-to-neighbor delivery; charges one local float per payload entry.
  /// When `expected` is given every (from, to) payload must match its size.
  std::vector<std::vector<Envelope>> neighbor_exchange(std::vector<Envelope> outbox, const LinkSizes* expected = nullptr) {
    std::uint64_t floats = 0;
    for (const auto& e : outbox) {
      if (e.from < 0 || e.from >= agents_ || e.to < 0 || e.to >= agents_) throw FabricError("exchange: agent id out of range");
      if (e.from == e.to) throw FabricError("exchange: agent " + std::to_string(e.from) + " addressed itself");
      if (expected != nullptr) {
        const auto it = expected->find({e.from, e.to});
        const Index want = it == expected->end() ? 0 : it->second;
        if (static_cast<Index>(e.payload.size()) != want) {
          throw FabricError("exchange: payload " + std::to_string(e.from) + "->" + std::to_string(e.to) + " has " +
                            std::to_string(e.payload.size()) + " floats, expected " + std::to_string(want));
        }
      }
      floats += e.payload.size();
    }
    ledger_.charge_local_floats(phase_, floats);
    return transport_->route(std::move(outbox), agents_);
  }

 private:
  void collect(std::size_t contributors) {
    for (std::size_t i = 0; i < contributors && i < static_cast<std::size_t>(agents_); ++i) barrier_.post(static_cast<Index>(i));
    if (contributors > static_cast<std::size_t>(agents_)) {
      barrier_.reset();
      throw FabricError("collective: more contributions than agents");
    }
    try {
      barrier_.advance();
    } catch (...) {
      barrier_.reset();
      throw;
    }
  }

  Index agents_;
  std::unique_ptr<Transport> transport_;
  RoundBarrier barrier_;
  CommLedger ledger_;
  Phase phase_ = Phase::Init;
};

}  // namespace dasm
