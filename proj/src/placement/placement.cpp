#include "moek/placement/placement.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

namespace moek::placement {

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::frequency:
        return "frequency";
    case Strategy::path:
        return "path";
    case Strategy::two_stage:
        return "two-stage";
    }
    return "?";
}

Strategy parse_strategy(std::string_view s)
{
    if (s == "frequency" || s == "freq")
        return Strategy::frequency;
    if (s == "path")
        return Strategy::path;
    if (s == "two-stage" || s == "two_stage")
        return Strategy::two_stage;
    throw ConfigError("unknown strategy '" + std::string(s) + "' (expected frequency, path or two-stage)");
}

bool PlacementPlan::resident(std::size_t layer, ExpertId expert) const
{
    const auto& r = residents[layer];
    return std::binary_search(r.begin(), r.end(), expert);
}

std::size_t PlacementPlan::total() const noexcept
{
    std::size_t n = 0;
    for (const auto& r : residents)
        n += r.size();
    return n;
}

void PlacementPlan::validate() const
{
    if (residents.size() != layers)
        throw InputError("plan lists " + std::to_string(residents.size()) + " layers, expected " +
                         std::to_string(layers));
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& r = residents[l];
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (r[i] >= experts_per_layer)
                throw InputError("plan layer " + std::to_string(l) + ": expert " + std::to_string(r[i]) +
                                 " out of range");
            if (i > 0 && r[i] <= r[i - 1])
                throw InputError("plan layer " + std::to_string(l) + ": residents not strictly ascending");
        }
    }
    if (total() > budget)
        throw InputError("plan holds " + std::to_string(total()) + " experts, over its budget of " +
                         std::to_string(budget));
}

namespace {

void check_budget(std::size_t budget, std::size_t layers, std::size_t experts)
{
    if (budget > layers * experts)
        throw ConfigError("budget " + std::to_string(budget) + " exceeds the " + std::to_string(layers * experts) +
                          " experts in the model");
}

PlacementPlan empty_plan(Strategy s, std::size_t budget, std::size_t layers, std::size_t experts)
{
    return PlacementPlan{s, budget, layers, experts, std::vector<std::vector<ExpertId>>(layers)};
}

void finish(PlacementPlan& p)
{
    for (auto& r : p.residents)
        std::sort(r.begin(), r.end());
}

} // namespace

PlacementPlan plan_frequency(const trace::ExpertFreq& freq, std::size_t budget)
{
    check_budget(budget, freq.layers, freq.experts_per_layer);
    std::vector<std::tuple<std::uint64_t, std::size_t, ExpertId>> all;
    all.reserve(freq.layers * freq.experts_per_layer);
    for (std::size_t l = 0; l < freq.layers; ++l)
        for (std::size_t e = 0; e < freq.experts_per_layer; ++e)
            all.emplace_back(freq(l, e), l, static_cast<ExpertId>(e));
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b))
            return std::get<0>(a) > std::get<0>(b);
        return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
    });

    PlacementPlan p = empty_plan(Strategy::frequency, budget, freq.layers, freq.experts_per_layer);
    for (std::size_t i = 0; i < budget; ++i)
        p.residents[std::get<1>(all[i])].push_back(std::get<2>(all[i]));
    finish(p);
    return p;
}

PlacementPlan plan_path(const trace::PathStats& stats, std::size_t budget)
{
    check_budget(budget, stats.layers, stats.experts_per_layer);
    PlacementPlan p = empty_plan(Strategy::path, budget, stats.layers, stats.experts_per_layer);
    std::vector<std::uint8_t> on(stats.layers * stats.experts_per_layer, 0);
    std::size_t used = 0;
    for (const auto& pc : stats.paths) {
        std::size_t fresh = 0;
        for (std::size_t i = 0; i < pc.path.size(); ++i)
            fresh += !on[(i / stats.top_k) * stats.experts_per_layer + pc.path[i]];
        if (used + fresh > budget)
            break;
        for (std::size_t i = 0; i < pc.path.size(); ++i) {
            const std::size_t layer = i / stats.top_k;
            auto& slot = on[layer * stats.experts_per_layer + pc.path[i]];
            if (!slot) {
                slot = 1;
                p.residents[layer].push_back(pc.path[i]);
            }
        }
        used += fresh;
    }
    finish(p);
    return p;
}

PlacementPlan plan_two_stage(const trace::PathStats& stats, const trace::ExpertFreq& freq,
                             std::size_t top_k_per_layer, std::size_t supplement_k_per_layer)
{
    if (stats.layers != freq.layers || stats.experts_per_layer != freq.experts_per_layer)
        throw ConfigError("path statistics and expert frequencies describe different models");
    const std::size_t per_layer = top_k_per_layer + supplement_k_per_layer;
    if (per_layer > freq.experts_per_layer)
        throw ConfigError("top_k_per_layer + supplement_k_per_layer = " + std::to_string(per_layer) +
                          " exceeds experts_per_layer (" + std::to_string(freq.experts_per_layer) + ")");

    PlacementPlan p = empty_plan(Strategy::two_stage, per_layer * freq.layers, freq.layers, freq.experts_per_layer);
    for (std::size_t l = 0; l < freq.layers; ++l) {
        auto& r = p.residents[l];
        auto has = [&](ExpertId e) { return std::find(r.begin(), r.end(), e) != r.end(); };

        // Stage 1: anchor the layer on its experts from the hottest paths.
        for (const auto& pc : stats.paths) {
            if (r.size() >= top_k_per_layer)
                break;
            for (std::size_t k = 0; k < stats.top_k && r.size() < top_k_per_layer; ++k) {
                const ExpertId e = pc.path[l * stats.top_k + k];
                if (!has(e))
                    r.push_back(e);
            }
        }

        // Stage 2: supplement with the layer's most frequent remaining experts.
        std::vector<ExpertId> order(freq.experts_per_layer);
        std::iota(order.begin(), order.end(), ExpertId{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](ExpertId a, ExpertId b) { return freq(l, a) > freq(l, b); });
        for (ExpertId e : order) {
            if (r.size() >= per_layer)
                break;
            if (!has(e))
                r.push_back(e);
        }
    }
    finish(p);
    return p;
}

PlanReport summarize(std::vector<double> layer_rates)
{
    PlanReport r;
    r.layer_hit_rate = std::move(layer_rates);
    const auto& v = r.layer_hit_rate;
    if (v.empty())
        return r;
    const double n = static_cast<double>(v.size());
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v)
        ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / n);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    r.gap = *hi - *lo;
    return r;
}

namespace {

void check_dims(const PlacementPlan& plan, const trace::Trace& t)
{
    if (plan.layers != t.layers || plan.experts_per_layer != t.experts_per_layer)
        throw ConfigError("plan is for " + std::to_string(plan.layers) + "x" + std::to_string(plan.experts_per_layer) +
                          " experts, trace has " + std::to_string(t.layers) + "x" +
                          std::to_string(t.experts_per_layer));
    if (plan.residents.size() != plan.layers)
        throw ConfigError("plan residents do not cover every layer");
    if (t.events.empty())
        throw InputError("cannot evaluate a plan on an empty trace");
}

} // namespace

PlanReport evaluate_plan(const PlacementPlan& plan, const trace::Trace& t)
{
    check_dims(plan, t);
    const auto layers = static_cast<std::ptrdiff_t>(t.layers);
    std::vector<double> rates(t.layers);
    const double denom = static_cast<double>(t.top_k * t.events.size());
#pragma omp parallel for schedule(static) if (t.events.size() * t.layers > 4096)
    for (std::ptrdiff_t l = 0; l < layers; ++l) {
        std::vector<std::uint8_t> mask(t.experts_per_layer, 0);
        for (ExpertId e : plan.residents[static_cast<std::size_t>(l)])
            mask[e] = 1;
        std::uint64_t hits = 0;
        for (const auto& ev : t.events)
            for (ExpertId e : t.selection(ev, static_cast<std::size_t>(l)))
                hits += mask[e];
        rates[static_cast<std::size_t>(l)] = static_cast<double>(hits) / denom;
    }
    return summarize(std::move(rates));
}

PlanReport reference::evaluate_plan(const PlacementPlan& plan, const trace::Trace& t)
{
    check_dims(plan, t);
    std::vector<std::uint64_t> hits(t.layers, 0);
    for (const auto& ev : t.events)
        for (std::size_t l = 0; l < t.layers; ++l)
            for (ExpertId e : t.selection(ev, l))
                hits[l] += plan.resident(l, e);
    std::vector<double> rates(t.layers);
    for (std::size_t l = 0; l < t.layers; ++l)
        rates[l] = static_cast<double>(hits[l]) / static_cast<double>(t.top_k * t.events.size());
    return summarize(std::move(rates));
}

// ---- serialization ---------------------------------------------------------

nlohmann::json to_json(const PlacementPlan& plan)
{
    return {{"strategy", std::string(to_string(plan.strategy))},
            {"budget", plan.budget},
            {"layers", plan.layers},
            {"experts_per_layer", plan.experts_per_layer},
            {"residents", plan.residents}};
}

PlacementPlan plan_from_json(const nlohmann::json& doc)
{
    PlacementPlan p;
    try {
        p.strategy = parse_strategy(doc.at("strategy").get<std::string>());
        p.budget = doc.at("budget").get<std::size_t>();
        p.layers = doc.at("layers").get<std::size_t>();
        p.experts_per_layer = doc.at("experts_per_layer").get<std::size_t>();
        p.residents = doc.at("residents").get<std::vector<std::vector<ExpertId>>>();
        for (auto& r : p.residents)
            std::sort(r.begin(), r.end());
        p.validate();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("plan: ") + e.what());
    } catch (const ConfigError& e) {
        throw ParseError(std::string("plan: ") + e.what());
    } catch (const InputError& e) {
        throw ParseError(std::string("plan: ") + e.what());
    }
    return p;
}

void write_plan(const std::string& path, const PlacementPlan& plan)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    out << to_json(plan).dump(2) << '\n';
    if (!out.flush())
        throw IoError("write to '" + path + "' failed");
}

PlacementPlan read_plan(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open plan '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("plan '" + path + "': " + e.what());
    }
    return plan_from_json(doc);
}

nlohmann::json to_json(const PlanReport& r)
{
    return {{"layer_hit_rate", r.layer_hit_rate}, {"mean", r.mean}, {"std", r.std}, {"gap", r.gap}};
}

} // namespace moek::placement
