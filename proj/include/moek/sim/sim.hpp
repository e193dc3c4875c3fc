#pragma once

#include "moek/placement/placement.hpp"
#include "moek/sim/cache.hpp"
#include "moek/trace/trace.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moek::sim {

/// Per-expert costs. latency_cpu_ms may be +inf to force offloading.
struct CostModel
{
    double latency_cpu_ms = 1.0;
    double latency_gpu_ms = 0.05;
    double expert_bytes = 176'160'768.0; // one 8-bit 4096x14336x3 expert
    double pcie_bw_bytes_per_ms = 16.0e6;
    double activation_return_ms = 0.0;

    double transfer_ms() const { return expert_bytes / pcie_bw_bytes_per_ms; }

    /// Throws ConfigError for negative, NaN or otherwise unusable values.
    void validate() const;
    /// The model assumes the CPU is the slower device per token.
    bool cpu_not_faster() const { return latency_cpu_ms >= latency_gpu_ms; }

    friend bool operator==(const CostModel&, const CostModel&) = default;
};

/// Cost model plus cache size, as read from a config document.
struct SimConfig
{
    CostModel cost;
    std::size_t cache_capacity = 0;
};

nlohmann::json to_json(const SimConfig& c);
/// Missing keys keep their defaults; "inf" is accepted for latencies.
SimConfig sim_config_from_json(const nlohmann::json& doc, SimConfig base = {});
SimConfig read_sim_config(const std::string& path, SimConfig base = {});

/// Largest batch size for which computing on the CPU is no slower than
/// transferring the expert; transfer pays off only for n > n_critical.
/// nullopt means the CPU wins at every batch size.
using CriticalBatch = std::optional<std::uint64_t>;

CriticalBatch critical_batch(const CostModel& cost);

double cpu_latency(const CostModel& cost, std::uint64_t n);
double transfer_latency(const CostModel& cost, std::uint64_t n);

enum class DecisionKind : std::size_t { gpu_resident_hit, cache_hit, cpu_compute, transfer_then_gpu };
inline constexpr std::size_t kDecisionKinds = 4;

std::string_view to_string(DecisionKind k);

struct Decision
{
    DecisionKind kind = DecisionKind::cpu_compute;
    double latency_ms = 0.0;
    double transfer_ms = 0.0; // share of latency spent moving weights
};

/// Routes one expert activation. Refreshes or fills `cache` as a side effect.
Decision decide(trace::ExpertId expert, std::size_t layer, std::uint64_t n_inputs,
                const placement::PlacementPlan& plan, LruCache& cache, const CostModel& cost);

/// Same, with the critical batch precomputed.
Decision decide(trace::ExpertId expert, std::size_t layer, std::uint64_t n_inputs,
                const placement::PlacementPlan& plan, LruCache& cache, const CostModel& cost, CriticalBatch n_critical);

struct SimReport
{
    std::string strategy;
    std::size_t layers = 0;
    std::size_t prefill_events = 0;
    std::size_t decode_events = 0;
    CriticalBatch n_critical;

    // static plan residency, all activations
    std::vector<double> layer_hit_rate;
    double hit_rate_mean = 0.0;
    double hit_rate_std = 0.0;
    double hit_rate_gap = 0.0;
    double prefill_hit_rate = 0.0;
    double decode_hit_rate = 0.0;

    std::uint64_t cache_hits = 0;
    std::uint64_t cache_lookups = 0; // decisions for non-resident experts
    double cache_hit_rate = 0.0;

    std::array<std::uint64_t, kDecisionKinds> decisions{};
    std::uint64_t decision_count() const;

    double total_latency_ms = 0.0;
    double transfer_ms = 0.0;
    double transfer_fraction = 0.0;
    std::vector<double> token_latency_ms;
    std::vector<double> layer_latency_ms;
    double layer_latency_std = 0.0;

    friend bool operator==(const SimReport&, const SimReport&) = default;
};

/// Replays the trace in order. Prompt tokens of a sequence form one batch:
/// each (layer, expert) they touch is decided once with n_inputs = number of
/// prompt tokens routed to it. Generated tokens are decided one at a time.
SimReport simulate(const trace::Trace& t, const placement::PlacementPlan& plan, const CostModel& cost,
                   std::size_t cache_capacity);

nlohmann::json to_json(const SimReport& r);
SimReport report_from_json(const nlohmann::json& doc);

enum class ReportFormat { text, csv, plotdata };
ReportFormat parse_report_format(std::string_view s);

std::string render_report(const SimReport& r, ReportFormat format);

} // namespace moek::sim
