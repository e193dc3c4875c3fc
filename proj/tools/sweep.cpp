#include "sweep.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>

namespace moek::cli {

void SweepConfig::validate() const
{
    trace::GenConfig probe = model;
    probe.validate();
    sim.cost.validate();
    if (jobs < 1)
        throw ConfigError("--jobs must be at least 1");
    if (strategies.empty() || budgets.empty() || lengths.empty())
        throw ConfigError("sweep grid has an empty axis");
    if (calib_tokens == 0)
        throw ConfigError("calibration needs at least one token");
    const std::size_t all = model.layers * model.experts_per_layer;
    for (std::size_t b : budgets) {
        if (b > all)
            throw ConfigError("budget " + std::to_string(b) + " exceeds the " + std::to_string(all) + " experts");
        if (std::find(strategies.begin(), strategies.end(), placement::Strategy::two_stage) != strategies.end()) {
            if (b % model.layers != 0 || b / model.layers < top_k_per_layer)
                throw ConfigError("two-stage needs a budget that is a multiple of the layer count and at least " +
                                  std::to_string(top_k_per_layer) + " per layer; got " + std::to_string(b));
        }
    }
    for (std::size_t len : lengths)
        if (len == 0)
            throw ConfigError("input lengths must be positive");
}

trace::Trace calibration_trace(const SweepConfig& cfg)
{
    trace::GenConfig g = cfg.model;
    g.n_prefill_tokens = 0;
    g.n_decode_tokens = cfg.calib_tokens;
    g.n_sequences = 1;
    g.stream = 0;
    return trace::generate_trace(g);
}

trace::Trace evaluation_trace(const SweepConfig& cfg, std::size_t input_length)
{
    trace::GenConfig g = cfg.model;
    g.n_prefill_tokens = input_length;
    g.n_decode_tokens = cfg.decode_tokens;
    g.n_sequences = std::max<std::size_t>(1, cfg.eval_tokens / input_length);
    g.stream = 1;
    return trace::generate_trace(g);
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg)
{
    cfg.validate();
    const trace::Trace calib = calibration_trace(cfg);
    const trace::PathStats stats = trace::path_stats(calib);
    const trace::ExpertFreq freq = trace::expert_freq(calib);
    std::vector<trace::Trace> evals;
    for (std::size_t len : cfg.lengths)
        evals.push_back(evaluation_trace(cfg, len));

    const std::size_t nb = cfg.budgets.size(), nl = cfg.lengths.size();
    const std::size_t cells = cfg.strategies.size() * nb * nl;
    std::vector<SweepRow> rows(cells);
    std::vector<std::exception_ptr> errors(cells);

#pragma omp parallel for schedule(dynamic) num_threads(cfg.jobs)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cells); ++c) {
        const auto cell = static_cast<std::size_t>(c);
        try {
            SweepRow& row = rows[cell];
            row.strategy = cfg.strategies[cell / (nb * nl)];
            row.budget = cfg.budgets[(cell / nl) % nb];
            const std::size_t li = cell % nl;
            row.input_length = cfg.lengths[li];
            const trace::Trace& eval = evals[li];
            row.sequences = trace::sequences(eval).size();

            placement::PlacementPlan plan;
            switch (row.strategy) {
            case placement::Strategy::frequency:
                plan = placement::plan_frequency(freq, row.budget);
                break;
            case placement::Strategy::path:
                plan = placement::plan_path(stats, row.budget);
                break;
            case placement::Strategy::two_stage:
                plan = placement::plan_two_stage(stats, freq, cfg.top_k_per_layer,
                                                 row.budget / cfg.model.layers - cfg.top_k_per_layer);
                break;
            }
            row.residents = plan.total();
            row.min_per_layer = row.max_per_layer = plan.residents.front().size();
            for (const auto& r : plan.residents) {
                row.min_per_layer = std::min(row.min_per_layer, r.size());
                row.max_per_layer = std::max(row.max_per_layer, r.size());
            }
            row.hits = placement::evaluate_plan(plan, eval);
            const sim::SimReport rep = sim::simulate(eval, plan, cfg.sim.cost, cfg.sim.cache_capacity);
            row.total_latency_ms = rep.total_latency_ms;
            row.transfer_fraction = rep.transfer_fraction;
            row.cache_hit_rate = rep.cache_hit_rate;
        } catch (...) {
            errors[cell] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::string out = "strategy,budget,input_length,sequences,residents,min_per_layer,max_per_layer,"
                      "mean_hit_rate,std,gap,total_latency_ms,transfer_fraction,cache_hit_rate\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.3f,%.6f,%.6f\n",
                      std::string(placement::to_string(r.strategy)).c_str(), r.budget, r.input_length, r.sequences,
                      r.residents, r.min_per_layer, r.max_per_layer, r.hits.mean, r.hits.std, r.hits.gap,
                      r.total_latency_ms, r.transfer_fraction, r.cache_hit_rate);
        out += buf;
    }
    return out;
}

} // namespace moek::cli
