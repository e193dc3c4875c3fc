#pragma once

#include "moek/placement/placement.hpp"
#include "moek/sim/sim.hpp"
#include "moek/trace/trace.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace moek::cli {

/// Grid of strategies x resident budgets x input lengths. Every cell plans
/// from one calibration trace and is scored on a held-out trace drawn from
/// the same routing model, split into sequences of the cell's input length.
struct SweepConfig
{
    trace::GenConfig model; // routing model; token counts here are ignored
    std::size_t calib_tokens = 1000;
    std::size_t eval_tokens = 1000; // prompt tokens per cell, split by length
    std::size_t decode_tokens = 16; // generated tokens per sequence
    std::vector<placement::Strategy> strategies{placement::Strategy::frequency, placement::Strategy::path,
                                                placement::Strategy::two_stage};
    std::vector<std::size_t> budgets{128, 160};
    std::vector<std::size_t> lengths{25, 50, 100};
    std::size_t top_k_per_layer = 2;
    sim::SimConfig sim;
    int jobs = 1;

    void validate() const;
};

struct SweepRow
{
    placement::Strategy strategy = placement::Strategy::frequency;
    std::size_t budget = 0;
    std::size_t input_length = 0;
    std::size_t sequences = 0;
    std::size_t residents = 0;
    std::size_t min_per_layer = 0;
    std::size_t max_per_layer = 0;
    placement::PlanReport hits;
    double total_latency_ms = 0.0;
    double transfer_fraction = 0.0;
    double cache_hit_rate = 0.0;
};

/// Rows come back in grid order (strategy, then budget, then length)
/// whatever the number of jobs.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Calibration and evaluation traces used by every cell.
trace::Trace calibration_trace(const SweepConfig& cfg);
trace::Trace evaluation_trace(const SweepConfig& cfg, std::size_t input_length);

} // namespace moek::cli
