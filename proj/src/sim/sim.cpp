#include "moek/sim/sim.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace moek::sim {

// ---- cache -----------------------------------------------------------------

bool LruCache::touch(ExpertKey key)
{
    auto it = index_.find(pack(key));
    if (it == index_.end())
        return false;
    order_.splice(order_.begin(), order_, it->second);
    return true;
}

std::optional<ExpertKey> LruCache::insert(ExpertKey key)
{
    if (capacity_ == 0 || touch(key))
        return std::nullopt;
    std::optional<ExpertKey> evicted;
    if (order_.size() == capacity_) {
        evicted = order_.back();
        index_.erase(pack(order_.back()));
        order_.pop_back();
    }
    order_.push_front(key);
    index_.emplace(pack(key), order_.begin());
    return evicted;
}

// ---- cost model ------------------------------------------------------------

void CostModel::validate() const
{
    auto check = [](double v, const char* name, bool allow_inf) {
        if (std::isnan(v) || v < 0.0 || (!allow_inf && std::isinf(v)))
            throw ConfigError(std::string(name) + " must be a finite non-negative number");
    };
    check(latency_cpu_ms, "latency_cpu_ms", true);
    check(latency_gpu_ms, "latency_gpu_ms", false);
    check(expert_bytes, "expert_bytes", false);
    check(pcie_bw_bytes_per_ms, "pcie_bw_bytes_per_ms", false);
    check(activation_return_ms, "activation_return_ms", false);
    if (pcie_bw_bytes_per_ms == 0.0)
        throw ConfigError("pcie_bw_bytes_per_ms must be positive");
}

namespace {

nlohmann::json number(double v)
{
    if (std::isfinite(v))
        return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double read_number(const nlohmann::json& v, const std::string& key)
{
    if (v.is_number())
        return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "infinity")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        if (s == "nan")
            return std::numeric_limits<double>::quiet_NaN();
    }
    throw ParseError("'" + key + "' must be a number or \"inf\"");
}

} // namespace

nlohmann::json to_json(const SimConfig& c)
{
    return {{"latency_cpu_ms", number(c.cost.latency_cpu_ms)},
            {"latency_gpu_ms", number(c.cost.latency_gpu_ms)},
            {"expert_bytes", number(c.cost.expert_bytes)},
            {"pcie_bw_bytes_per_ms", number(c.cost.pcie_bw_bytes_per_ms)},
            {"activation_return_ms", number(c.cost.activation_return_ms)},
            {"cache_capacity", c.cache_capacity}};
}

SimConfig sim_config_from_json(const nlohmann::json& doc, SimConfig base)
{
    if (!doc.is_object())
        throw ParseError("cost config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (key == "latency_cpu_ms")
            base.cost.latency_cpu_ms = read_number(value, key);
        else if (key == "latency_gpu_ms")
            base.cost.latency_gpu_ms = read_number(value, key);
        else if (key == "expert_bytes")
            base.cost.expert_bytes = read_number(value, key);
        else if (key == "pcie_bw_bytes_per_ms")
            base.cost.pcie_bw_bytes_per_ms = read_number(value, key);
        else if (key == "activation_return_ms")
            base.cost.activation_return_ms = read_number(value, key);
        else if (key == "cache_capacity") {
            if (!value.is_number_unsigned())
                throw ParseError("'cache_capacity' must be a non-negative integer");
            base.cache_capacity = value.get<std::size_t>();
        } else
            throw ParseError("unknown cost config key '" + key + "'");
    }
    base.cost.validate();
    return base;
}

SimConfig read_sim_config(const std::string& path, SimConfig base)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open cost config '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("cost config '" + path + "': " + e.what());
    }
    return sim_config_from_json(doc, base);
}

double cpu_latency(const CostModel& cost, std::uint64_t n)
{
    return static_cast<double>(n) * cost.latency_cpu_ms + cost.activation_return_ms;
}

double transfer_latency(const CostModel& cost, std::uint64_t n)
{
    return cost.transfer_ms() + static_cast<double>(n) * cost.latency_gpu_ms;
}

CriticalBatch critical_batch(const CostModel& cost)
{
    const double te = cost.transfer_ms();
    const double r = cost.activation_return_ms;
    const double delta = cost.latency_cpu_ms - cost.latency_gpu_ms;
    if (std::isinf(cost.latency_cpu_ms))
        return 0;
    if (!(delta > 0.0)) // CPU no slower per token: only the fixed terms matter
        return r <= te ? CriticalBatch{} : CriticalBatch{0};

    const double x = (te - r) / delta;
    if (x < 0.0)
        return 0;
    if (x >= 0x1p62)
        return std::nullopt; // beyond any batch a trace can produce
    auto cpu_wins = [&](std::uint64_t n) { return cpu_latency(cost, n) <= transfer_latency(cost, n); };
    auto n = static_cast<std::uint64_t>(std::floor(x));
    // the closed form can be off by one after rounding; settle it directly
    while (n > 0 && !cpu_wins(n))
        --n;
    while (cpu_wins(n + 1))
        ++n;
    return n;
}

std::string_view to_string(DecisionKind k)
{
    switch (k) {
    case DecisionKind::gpu_resident_hit:
        return "gpu_resident_hit";
    case DecisionKind::cache_hit:
        return "cache_hit";
    case DecisionKind::cpu_compute:
        return "cpu_compute";
    case DecisionKind::transfer_then_gpu:
        return "transfer_then_gpu";
    }
    return "?";
}

Decision decide(trace::ExpertId expert, std::size_t layer, std::uint64_t n_inputs,
                const placement::PlacementPlan& plan, LruCache& cache, const CostModel& cost, CriticalBatch n_critical)
{
    if (n_inputs == 0)
        throw InputError("decide: n_inputs must be at least 1");
    if (layer >= plan.residents.size())
        throw InputError("decide: layer " + std::to_string(layer) + " is outside the plan");
    const double gpu = static_cast<double>(n_inputs) * cost.latency_gpu_ms;
    if (plan.resident(layer, expert))
        return {DecisionKind::gpu_resident_hit, gpu, 0.0};
    const ExpertKey key{static_cast<std::uint32_t>(layer), expert};
    if (cache.touch(key))
        return {DecisionKind::cache_hit, gpu, 0.0};
    if (n_critical && n_inputs > *n_critical) {
        cache.insert(key);
        const double te = cost.transfer_ms();
        return {DecisionKind::transfer_then_gpu, te + gpu, te};
    }
    return {DecisionKind::cpu_compute, cpu_latency(cost, n_inputs), 0.0};
}

Decision decide(trace::ExpertId expert, std::size_t layer, std::uint64_t n_inputs,
                const placement::PlacementPlan& plan, LruCache& cache, const CostModel& cost)
{
    return decide(expert, layer, n_inputs, plan, cache, cost, critical_batch(cost));
}

// ---- simulation ------------------------------------------------------------

std::uint64_t SimReport::decision_count() const
{
    return std::accumulate(decisions.begin(), decisions.end(), std::uint64_t{0});
}

namespace {

double population_std(const std::vector<double>& v)
{
    if (v.empty())
        return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

} // namespace

SimReport simulate(const trace::Trace& t, const placement::PlacementPlan& plan, const CostModel& cost,
                   std::size_t cache_capacity)
{
    if (plan.layers != t.layers || plan.experts_per_layer != t.experts_per_layer ||
        plan.residents.size() != t.layers)
        throw ConfigError("plan and trace describe different models");
    cost.validate();
    const auto seqs = trace::sequences(t);

    SimReport rep;
    rep.strategy = std::string(placement::to_string(plan.strategy));
    rep.layers = t.layers;
    rep.n_critical = critical_batch(cost);
    if (t.events.empty())
        return rep;

    LruCache cache(cache_capacity);
    std::vector<double> layer_latency(t.layers, 0.0);
    std::vector<std::uint64_t> layer_hits(t.layers, 0);
    std::uint64_t hits_by_phase[2] = {0, 0};
    rep.token_latency_ms.reserve(t.events.size());

    auto account = [&](std::size_t layer, const Decision& d) {
        ++rep.decisions[static_cast<std::size_t>(d.kind)];
        layer_latency[layer] += d.latency_ms;
        rep.total_latency_ms += d.latency_ms;
        rep.transfer_ms += d.transfer_ms;
        if (d.kind != DecisionKind::gpu_resident_hit)
            ++rep.cache_lookups;
        if (d.kind == DecisionKind::cache_hit)
            ++rep.cache_hits;
        return d.latency_ms;
    };

    std::vector<std::uint64_t> routed(t.experts_per_layer);
    for (const auto& seq : seqs) {
        if (seq.prefill_end > seq.begin) {
            double batch = 0.0;
            for (std::size_t l = 0; l < t.layers; ++l) {
                std::fill(routed.begin(), routed.end(), 0);
                for (std::size_t i = seq.begin; i < seq.prefill_end; ++i)
                    for (auto e : t.selection(t.events[i], l))
                        ++routed[e];
                for (trace::ExpertId e = 0; e < routed.size(); ++e)
                    if (routed[e] > 0)
                        batch += account(l, decide(e, l, routed[e], plan, cache, cost, rep.n_critical));
            }
            const std::size_t n = seq.prefill_end - seq.begin;
            rep.token_latency_ms.insert(rep.token_latency_ms.end(), n, batch / static_cast<double>(n));
            rep.prefill_events += n;
        }
        for (std::size_t i = seq.prefill_end; i < seq.end; ++i) {
            double tok = 0.0;
            for (std::size_t l = 0; l < t.layers; ++l)
                for (auto e : t.selection(t.events[i], l))
                    tok += account(l, decide(e, l, 1, plan, cache, cost, rep.n_critical));
            rep.token_latency_ms.push_back(tok);
            ++rep.decode_events;
        }
    }

    for (const auto& ev : t.events)
        for (std::size_t l = 0; l < t.layers; ++l)
            for (auto e : t.selection(ev, l))
                if (plan.resident(l, e)) {
                    ++layer_hits[l];
                    ++hits_by_phase[ev.phase == trace::Phase::prefill ? 0 : 1];
                }

    std::vector<double> rates(t.layers);
    for (std::size_t l = 0; l < t.layers; ++l)
        rates[l] = static_cast<double>(layer_hits[l]) / static_cast<double>(t.top_k * t.events.size());
    const auto summary = placement::summarize(std::move(rates));
    rep.layer_hit_rate = summary.layer_hit_rate;
    rep.hit_rate_mean = summary.mean;
    rep.hit_rate_std = summary.std;
    rep.hit_rate_gap = summary.gap;
    const auto per_phase = [&](std::uint64_t hits, std::size_t events) {
        return events == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(events * t.layers * t.top_k);
    };
    rep.prefill_hit_rate = per_phase(hits_by_phase[0], rep.prefill_events);
    rep.decode_hit_rate = per_phase(hits_by_phase[1], rep.decode_events);

    rep.cache_hit_rate =
        rep.cache_lookups == 0 ? 0.0 : static_cast<double>(rep.cache_hits) / static_cast<double>(rep.cache_lookups);
    rep.transfer_fraction = rep.total_latency_ms > 0.0 ? rep.transfer_ms / rep.total_latency_ms : 0.0;
    rep.layer_latency_ms = std::move(layer_latency);
    rep.layer_latency_std = population_std(rep.layer_latency_ms);
    return rep;
}

// ---- serialization ---------------------------------------------------------

nlohmann::json to_json(const SimReport& r)
{
    nlohmann::json decisions;
    for (std::size_t k = 0; k < kDecisionKinds; ++k)
        decisions[std::string(to_string(static_cast<DecisionKind>(k)))] = r.decisions[k];
    auto numbers = [](const std::vector<double>& v) {
        auto a = nlohmann::json::array();
        for (double x : v)
            a.push_back(number(x));
        return a;
    };
    return {{"strategy", r.strategy},
            {"layers", r.layers},
            {"prefill_events", r.prefill_events},
            {"decode_events", r.decode_events},
            {"n_critical", r.n_critical ? nlohmann::json(*r.n_critical) : nlohmann::json("unbounded")},
            {"layer_hit_rate", numbers(r.layer_hit_rate)},
            {"hit_rate_mean", number(r.hit_rate_mean)},
            {"hit_rate_std", number(r.hit_rate_std)},
            {"hit_rate_gap", number(r.hit_rate_gap)},
            {"prefill_hit_rate", number(r.prefill_hit_rate)},
            {"decode_hit_rate", number(r.decode_hit_rate)},
            {"cache_hits", r.cache_hits},
            {"cache_lookups", r.cache_lookups},
            {"cache_hit_rate", number(r.cache_hit_rate)},
            {"decisions", decisions},
            {"total_latency_ms", number(r.total_latency_ms)},
            {"transfer_ms", number(r.transfer_ms)},
            {"transfer_fraction", number(r.transfer_fraction)},
            {"token_latency_ms", numbers(r.token_latency_ms)},
            {"layer_latency_ms", numbers(r.layer_latency_ms)},
            {"layer_latency_std", number(r.layer_latency_std)}};
}

SimReport report_from_json(const nlohmann::json& doc)
{
    SimReport r;
    try {
        auto num = [&](const char* key) { return read_number(doc.at(key), key); };
        auto nums = [&](const char* key) {
            std::vector<double> v;
            for (const auto& x : doc.at(key))
                v.push_back(read_number(x, key));
            return v;
        };
        r.strategy = doc.at("strategy").get<std::string>();
        r.layers = doc.at("layers").get<std::size_t>();
        r.prefill_events = doc.at("prefill_events").get<std::size_t>();
        r.decode_events = doc.at("decode_events").get<std::size_t>();
        const auto& nc = doc.at("n_critical");
        if (nc.is_string() && nc.get<std::string>() == "unbounded")
            r.n_critical = std::nullopt;
        else
            r.n_critical = nc.get<std::uint64_t>();
        r.layer_hit_rate = nums("layer_hit_rate");
        r.hit_rate_mean = num("hit_rate_mean");
        r.hit_rate_std = num("hit_rate_std");
        r.hit_rate_gap = num("hit_rate_gap");
        r.prefill_hit_rate = num("prefill_hit_rate");
        r.decode_hit_rate = num("decode_hit_rate");
        r.cache_hits = doc.at("cache_hits").get<std::uint64_t>();
        r.cache_lookups = doc.at("cache_lookups").get<std::uint64_t>();
        r.cache_hit_rate = num("cache_hit_rate");
        for (std::size_t k = 0; k < kDecisionKinds; ++k)
            r.decisions[k] =
                doc.at("decisions").at(std::string(to_string(static_cast<DecisionKind>(k)))).get<std::uint64_t>();
        r.total_latency_ms = num("total_latency_ms");
        r.transfer_ms = num("transfer_ms");
        r.transfer_fraction = num("transfer_fraction");
        r.token_latency_ms = nums("token_latency_ms");
        r.layer_latency_ms = nums("layer_latency_ms");
        r.layer_latency_std = num("layer_latency_std");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    if (r.layer_latency_ms.size() != r.layer_hit_rate.size())
        throw ParseError("report: per-layer series differ in length");
    return r;
}

ReportFormat parse_report_format(std::string_view s)
{
    if (s == "text")
        return ReportFormat::text;
    if (s == "csv")
        return ReportFormat::csv;
    if (s == "plotdata")
        return ReportFormat::plotdata;
    throw ConfigError("unknown report format '" + std::string(s) + "' (expected text, csv or plotdata)");
}

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string render_report(const SimReport& r, ReportFormat format)
{
    std::string out;
    switch (format) {
    case ReportFormat::csv:
        out = "layer,hit_rate,latency_ms,std,gap,transfer_fraction\n";
        if (r.layer_hit_rate.empty())
            return out;
        for (std::size_t l = 0; l < r.layer_hit_rate.size(); ++l)
            out += std::to_string(l) + ',' + fmt(r.layer_hit_rate[l]) + ',' + fmt(r.layer_latency_ms[l]) + ",,,\n";
        out += "summary," + fmt(r.hit_rate_mean) + ',' + fmt(r.total_latency_ms) + ',' + fmt(r.hit_rate_std) + ',' +
               fmt(r.hit_rate_gap) + ',' + fmt(r.transfer_fraction) + '\n';
        return out;
    case ReportFormat::plotdata:
        out = "# strategy=" + r.strategy + "\n# layer hit_rate\n";
        for (std::size_t l = 0; l < r.layer_hit_rate.size(); ++l)
            out += std::to_string(l) + ' ' + fmt(r.layer_hit_rate[l]) + '\n';
        return out;
    case ReportFormat::text: {
        std::ostringstream s;
        s << "strategy            " << r.strategy << '\n'
          << "events              " << r.prefill_events << " prefill, " << r.decode_events << " decode\n"
          << "critical batch      " << (r.n_critical ? std::to_string(*r.n_critical) : std::string("unbounded"))
          << '\n'
          << "hit rate            mean " << fmt_fixed(100 * r.hit_rate_mean, 2) << "%  std "
          << fmt_fixed(100 * r.hit_rate_std, 2) << "%  gap " << fmt_fixed(100 * r.hit_rate_gap, 2) << "%\n"
          << "  prefill / decode  " << fmt_fixed(100 * r.prefill_hit_rate, 2) << "% / "
          << fmt_fixed(100 * r.decode_hit_rate, 2) << "%\n"
          << "cache               " << r.cache_hits << " hits / " << r.cache_lookups << " lookups ("
          << fmt_fixed(100 * r.cache_hit_rate, 2) << "%)\n"
          << "decisions          ";
        for (std::size_t k = 0; k < kDecisionKinds; ++k)
            s << ' ' << to_string(static_cast<DecisionKind>(k)) << '=' << r.decisions[k];
        s << '\n'
          << "total latency       " << fmt_fixed(r.total_latency_ms, 3) << " ms\n"
          << "transfer fraction   " << fmt_fixed(r.transfer_fraction, 6) << '\n'
          << "layer latency std   " << fmt_fixed(r.layer_latency_std, 3) << " ms\n";
        return s.str();
    }
    }
    return out;
}

} // namespace moek::sim
