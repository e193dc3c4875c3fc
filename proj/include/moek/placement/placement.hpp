#pragma once

#include "moek/trace/trace.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace moek::placement {

using trace::ExpertId;

enum class Strategy { frequency, path, two_stage };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// Experts pinned in GPU memory, per layer.
struct PlacementPlan
{
    Strategy strategy = Strategy::frequency;
    std::size_t budget = 0;
    std::size_t layers = 0;
    std::size_t experts_per_layer = 0;
    std::vector<std::vector<ExpertId>> residents; // per layer, ascending

    bool resident(std::size_t layer, ExpertId expert) const;
    std::size_t total() const noexcept;

    /// Throws InputError if the plan breaks its own invariants.
    void validate() const;

    friend bool operator==(const PlacementPlan&, const PlacementPlan&) = default;
};

/// Globally hottest (layer, expert) pairs; ties by layer then expert id.
PlacementPlan plan_frequency(const trace::ExpertFreq& freq, std::size_t budget);

/// Whole paths in descending frequency until the next one no longer fits.
PlacementPlan plan_path(const trace::PathStats& stats, std::size_t budget);

/// Per layer: fill to top_k_per_layer from the hottest paths, then top up
/// with the most frequent remaining experts to top_k + supplement_k.
PlacementPlan plan_two_stage(const trace::PathStats& stats, const trace::ExpertFreq& freq,
                             std::size_t top_k_per_layer, std::size_t supplement_k_per_layer);

struct PlanReport
{
    std::vector<double> layer_hit_rate;
    double mean = 0.0;
    double std = 0.0; // population
    double gap = 0.0; // max - min

    friend bool operator==(const PlanReport&, const PlanReport&) = default;
};

PlanReport summarize(std::vector<double> layer_rates);

/// Static residency hit rate per layer, counting every routed activation.
PlanReport evaluate_plan(const PlacementPlan& plan, const trace::Trace& t);

namespace reference {
// Event-major serial recount.
PlanReport evaluate_plan(const PlacementPlan& plan, const trace::Trace& t);
} // namespace reference

nlohmann::json to_json(const PlacementPlan& plan);
PlacementPlan plan_from_json(const nlohmann::json& doc);
void write_plan(const std::string& path, const PlacementPlan& plan);
PlacementPlan read_plan(const std::string& path);

nlohmann::json to_json(const PlanReport& r);

} // namespace moek::placement
