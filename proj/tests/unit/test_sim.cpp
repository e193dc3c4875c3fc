#include "moek/error.hpp"
#include "moek/sim/sim.hpp"
#include "oracle_lru.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <set>
#include <sstream>

using namespace moek;
using namespace moek::sim;
using placement::PlacementPlan;

namespace {

using testing::OracleLru;

void run_lru_oracle(std::uint64_t seed, std::size_t ops)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> layer(0, 3), expert(0, 3), op(0, 2);
    for (std::size_t capacity : {0, 1, 2, 3, 5, 8}) {
        LruCache cache(capacity);
        OracleLru oracle{capacity, {}};
        std::vector<ExpertKey> history; // every access, in order
        for (std::size_t i = 0; i < ops; ++i) {
            const ExpertKey k{layer(rng), expert(rng)};
            if (op(rng) == 0) {
                REQUIRE(cache.touch(k) == oracle.touch(k));
            } else {
                const auto evicted = cache.insert(k);
                REQUIRE(evicted == oracle.insert(k));
                if (evicted) {
                    // the incoming key plus the capacity - 1 most recent distinct ones survive
                    std::set<ExpertKey> recent;
                    for (auto it = history.rbegin(); it != history.rend() && recent.size() + 1 < capacity; ++it)
                        recent.insert(*it);
                    CHECK(recent.count(*evicted) == 0);
                }
            }
            if (cache.contains(k))
                history.push_back(k);
            REQUIRE(cache.contents() == oracle.items);
            REQUIRE(cache.size() <= capacity);
        }
    }
}

trace::Trace batched_trace(std::uint64_t seed)
{
    trace::GenConfig cfg;
    cfg.layers = 8;
    cfg.n_sequences = 4;
    cfg.n_prefill_tokens = 32;
    cfg.n_decode_tokens = 16;
    cfg.seed = seed;
    return trace::generate_trace(cfg);
}

PlacementPlan empty_plan(const trace::Trace& t)
{
    return PlacementPlan{placement::Strategy::frequency, 0, t.layers, t.experts_per_layer,
                         std::vector<std::vector<trace::ExpertId>>(t.layers)};
}

CostModel cost_with(double te, double cpu, double gpu)
{
    CostModel c;
    c.expert_bytes = te;
    c.pcie_bw_bytes_per_ms = 1.0;
    c.latency_cpu_ms = cpu;
    c.latency_gpu_ms = gpu;
    return c;
}

} // namespace

TEST_SUITE("sim.cache")
{
    const ExpertKey A{0, 1}, B{0, 2}, C{1, 1};

    TEST_CASE("textbook eviction")
    {
        LruCache c(2);
        CHECK_FALSE(c.insert(A));
        CHECK_FALSE(c.insert(B));
        CHECK(c.insert(C) == A);
        CHECK(c.contents() == std::vector<ExpertKey>{C, B});
    }

    TEST_CASE("recency refresh")
    {
        LruCache c(2);
        c.insert(A);
        c.insert(B);
        CHECK(c.touch(A));
        CHECK(cache_insert(c, C) == B);
    }

    TEST_CASE("reinsert refreshes without eviction")
    {
        LruCache c(2);
        c.insert(A);
        c.insert(B);
        CHECK_FALSE(c.insert(A));
        CHECK(c.contents() == std::vector<ExpertKey>{A, B});
    }

    TEST_CASE("capacity zero stores nothing")
    {
        LruCache c(0);
        CHECK_FALSE(c.insert(A));
        CHECK(c.size() == 0);
        CHECK_FALSE(c.touch(A));
    }

    TEST_CASE("matches reference LRU over 1,000 random operations")
    {
        run_lru_oracle(1, 1000);
    }
}

TEST_SUITE("sim.critical_batch")
{
    TEST_CASE("worked example flips at 12")
    {
        const CostModel c = cost_with(10, 1, 0.1);
        CHECK(c.transfer_ms() == 10.0);
        REQUIRE(critical_batch(c).has_value());
        CHECK(*critical_batch(c) == 11);
        PlacementPlan plan{placement::Strategy::frequency, 0, 1, 4, {{}}};
        LruCache cache(0);
        CHECK(decide(0, 0, 11, plan, cache, c).kind == DecisionKind::cpu_compute);
        CHECK(decide(0, 0, 12, plan, cache, c).kind == DecisionKind::transfer_then_gpu);
    }

    TEST_CASE("limit cases")
    {
        CHECK(critical_batch(cost_with(0, 1, 0.1)) == CriticalBatch{0});
        CHECK_FALSE(critical_batch(cost_with(10, 0.5, 0.5)).has_value());
        CHECK(critical_batch(cost_with(10, std::numeric_limits<double>::infinity(), 0.05)) == CriticalBatch{0});
        CostModel r = cost_with(10, 1, 0.1);
        r.activation_return_ms = 1.0; // 0.9 n + 1 <= 10  ->  n <= 10
        CHECK(critical_batch(r) == CriticalBatch{10});
    }

    TEST_CASE("decisions are the cheaper option, ties to CPU")
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> te(0.0, 200.0), gpu(0.001, 1.0), ratio(1.0, 50.0);
        PlacementPlan plan{placement::Strategy::frequency, 0, 1, 4, {{}}};
        for (int m = 0; m < 50; ++m) {
            const CostModel c = cost_with(te(rng), 0.0, gpu(rng));
            CostModel cost = c;
            cost.latency_cpu_ms = c.latency_gpu_ms * ratio(rng);
            const auto nc = critical_batch(cost);
            for (std::uint64_t n = 1; n <= 1000; ++n) {
                LruCache cache(0);
                const Decision d = decide(1, 0, n, plan, cache, cost, nc);
                const double tc = static_cast<double>(n) * cost.latency_cpu_ms;
                const double tt = cost.transfer_ms() + static_cast<double>(n) * cost.latency_gpu_ms;
                const auto want = tc <= tt ? DecisionKind::cpu_compute : DecisionKind::transfer_then_gpu;
                REQUIRE(d.kind == want);
                CHECK(d.latency_ms == std::min(tc, tt));
            }
        }
    }
}

TEST_SUITE("sim.decide")
{
    const CostModel c = cost_with(10, 1, 0.1);
    const PlacementPlan plan{placement::Strategy::frequency, 1, 2, 4, {{2}, {}}};

    TEST_CASE("decode token prefers the CPU")
    {
        LruCache cache(4);
        const Decision d = decide(0, 0, 1, plan, cache, c);
        CHECK(d.kind == DecisionKind::cpu_compute);
        CHECK(d.latency_ms == 1.0);
        CHECK(cache.size() == 0);
    }

    TEST_CASE("large prefill batch transfers and fills the cache")
    {
        LruCache cache(4);
        const Decision d = decide(0, 1, 100, plan, cache, c);
        CHECK(d.kind == DecisionKind::transfer_then_gpu);
        CHECK(d.latency_ms == doctest::Approx(10.0 + 100 * 0.1));
        CHECK(d.transfer_ms == 10.0);
        CHECK(cache.contains({1, 0}));
        const Decision again = decide(0, 1, 1, plan, cache, c);
        CHECK(again.kind == DecisionKind::cache_hit);
        CHECK(again.latency_ms == doctest::Approx(0.1));
    }

    TEST_CASE("plan residents short-circuit")
    {
        LruCache cache(4);
        for (std::uint64_t n : {1, 12, 500}) {
            const Decision d = decide(2, 0, n, plan, cache, c);
            CHECK(d.kind == DecisionKind::gpu_resident_hit);
            CHECK(d.latency_ms == doctest::Approx(static_cast<double>(n) * 0.1));
        }
        CHECK(cache.size() == 0);
    }

    TEST_CASE("argument checks")
    {
        LruCache cache(1);
        CHECK_THROWS_AS(decide(0, 0, 0, plan, cache, c), InputError);
        CHECK_THROWS_AS(decide(0, 5, 1, plan, cache, c), InputError);
    }
}

TEST_SUITE("sim.simulate")
{
    TEST_CASE("full residency runs on the GPU")
    {
        const auto t = batched_trace(1);
        PlacementPlan full = empty_plan(t);
        full.budget = t.layers * t.experts_per_layer;
        for (auto& r : full.residents)
            for (trace::ExpertId e = 0; e < t.experts_per_layer; ++e)
                r.push_back(e);
        // decode-only trace: every activation is one decision
        trace::GenConfig cfg;
        cfg.layers = 8;
        cfg.n_decode_tokens = 100;
        const auto decode = trace::generate_trace(cfg);
        const CostModel c = cost_with(10, 1, 0.1);
        const SimReport r = simulate(decode, full, c, 4);
        CHECK(r.total_latency_ms == doctest::Approx(decode.activation_count() * 0.1));
        CHECK(r.transfer_ms == 0.0);
        CHECK(r.cache_lookups == 0);
        CHECK(r.decisions[0] == decode.activation_count());
        CHECK(r.hit_rate_mean == 1.0);
    }

    TEST_CASE("empty plan without cache runs on the CPU")
    {
        trace::GenConfig cfg;
        cfg.n_decode_tokens = 50;
        const auto t = trace::generate_trace(cfg);
        const SimReport r = simulate(t, empty_plan(t), cost_with(10, 1, 0.1), 0);
        CHECK(r.decisions[static_cast<std::size_t>(DecisionKind::cpu_compute)] == t.activation_count());
        CHECK(r.total_latency_ms == doctest::Approx(static_cast<double>(t.activation_count())));
    }

    TEST_CASE("naive offloading is dominated by transfers")
    {
        trace::GenConfig cfg;
        cfg.n_decode_tokens = 100;
        const auto t = trace::generate_trace(cfg);
        const CostModel c = cost_with(100, std::numeric_limits<double>::infinity(), 0.05);
        const SimReport r = simulate(t, empty_plan(t), c, 0);
        CHECK(r.decisions[static_cast<std::size_t>(DecisionKind::transfer_then_gpu)] == t.activation_count());
        CHECK(r.transfer_fraction > 0.995);
        CHECK(std::abs(r.transfer_fraction - 100.0 / 100.05) <= 1e-6);
    }

    TEST_CASE("decision conservation")
    {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto t = batched_trace(seed);
            const auto plan = placement::plan_frequency(trace::expert_freq(t), 16);
            const SimReport r = simulate(t, plan, cost_with(10, 1, 0.1), 3);

            std::uint64_t want = 0;
            for (const auto& seq : trace::sequences(t)) {
                want += (seq.end - seq.prefill_end) * t.layers * t.top_k;
                for (std::size_t l = 0; l < t.layers; ++l) {
                    std::set<trace::ExpertId> unique;
                    for (std::size_t i = seq.begin; i < seq.prefill_end; ++i)
                        for (auto e : t.selection(t.events[i], l))
                            unique.insert(e);
                    want += unique.size();
                }
            }
            CHECK(r.decision_count() == want);
            CHECK(r.token_latency_ms.size() == t.events.size());
            double tokens = 0.0, layers = 0.0;
            for (double v : r.token_latency_ms)
                tokens += v;
            for (double v : r.layer_latency_ms)
                layers += v;
            CHECK(tokens == doctest::Approx(r.total_latency_ms).epsilon(1e-12));
            CHECK(layers == doctest::Approx(r.total_latency_ms).epsilon(1e-12));
            CHECK(r.prefill_events == 128);
            CHECK(r.decode_events == 64);
        }
    }

    TEST_CASE("more cache never costs more")
    {
        const CostModel c = cost_with(10, 1, 0.1);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto t = batched_trace(seed);
            const auto plan = placement::plan_frequency(trace::expert_freq(t), 16);
            double prev = std::numeric_limits<double>::infinity();
            for (std::size_t cap = 0; cap <= 8; ++cap) {
                const double total = simulate(t, plan, c, cap).total_latency_ms;
                CHECK(total <= prev);
                prev = total;
            }
        }
    }

    TEST_CASE("deterministic and serializable")
    {
        const auto t = batched_trace(3);
        const auto plan = placement::plan_frequency(trace::expert_freq(t), 16);
        const SimReport a = simulate(t, plan, cost_with(10, 1, 0.1), 4);
        CHECK(a == simulate(t, plan, cost_with(10, 1, 0.1), 4));
        CHECK(report_from_json(nlohmann::json::parse(to_json(a).dump())) == a);
        CHECK(a.strategy == "frequency");
    }

    TEST_CASE("mismatched plan")
    {
        const auto t = batched_trace(3);
        PlacementPlan p = empty_plan(t);
        p.layers = 3;
        CHECK_THROWS_AS(simulate(t, p, CostModel{}, 0), ConfigError);
    }
}

TEST_SUITE("sim.render")
{
    TEST_CASE("empty trace renders headers only")
    {
        trace::Trace t{4, 8, 2, {}};
        const SimReport r = simulate(t, empty_plan(t), CostModel{}, 0);
        CHECK(render_report(r, ReportFormat::csv) == "layer,hit_rate,latency_ms,std,gap,transfer_fraction\n");
    }

    TEST_CASE("csv shape and parse-back")
    {
        const auto t = batched_trace(4);
        const auto plan = placement::plan_frequency(trace::expert_freq(t), 20);
        const SimReport r = simulate(t, plan, cost_with(10, 1, 0.1), 2);
        std::istringstream csv(render_report(r, ReportFormat::csv));
        std::string line;
        std::getline(csv, line);
        std::vector<std::vector<std::string>> rows;
        while (std::getline(csv, line)) {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ','))
                cells.push_back(cell);
            if (!line.empty() && line.back() == ',')
                cells.emplace_back();
            rows.push_back(cells);
        }
        REQUIRE(rows.size() == t.layers + 1);
        for (std::size_t l = 0; l < t.layers; ++l) {
            REQUIRE(rows[l].size() == 6);
            CHECK(std::stoul(rows[l][0]) == l);
            CHECK(std::strtod(rows[l][1].c_str(), nullptr) == r.layer_hit_rate[l]);
            CHECK(std::strtod(rows[l][2].c_str(), nullptr) == r.layer_latency_ms[l]);
        }
        const auto& s = rows.back();
        REQUIRE(s.size() == 6);
        CHECK(s[0] == "summary");
        CHECK(std::strtod(s[1].c_str(), nullptr) == r.hit_rate_mean);
        CHECK(std::strtod(s[2].c_str(), nullptr) == r.total_latency_ms);
        CHECK(std::strtod(s[3].c_str(), nullptr) == r.hit_rate_std);
        CHECK(std::strtod(s[4].c_str(), nullptr) == r.hit_rate_gap);
        CHECK(std::strtod(s[5].c_str(), nullptr) == r.transfer_fraction);
    }

    TEST_CASE("plot data and text")
    {
        const auto t = batched_trace(5);
        const SimReport r = simulate(t, empty_plan(t), CostModel{}, 0);
        const std::string plot = render_report(r, ReportFormat::plotdata);
        CHECK(plot.rfind("# strategy=frequency\n", 0) == 0);
        CHECK(std::count(plot.begin(), plot.end(), '\n') == static_cast<long>(t.layers + 2));
        CHECK(render_report(r, ReportFormat::text).find("transfer fraction") != std::string::npos);
        CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
    }
}

TEST_SUITE("sim.config")
{
    TEST_CASE("json with overrides and infinity")
    {
        const auto doc = nlohmann::json::parse(R"({"latency_cpu_ms": "inf", "expert_bytes": 100,
                                                   "pcie_bw_bytes_per_ms": 1, "cache_capacity": 3})");
        const SimConfig c = sim_config_from_json(doc);
        CHECK(std::isinf(c.cost.latency_cpu_ms));
        CHECK(c.cost.transfer_ms() == 100.0);
        CHECK(c.cache_capacity == 3);
        CHECK(c.cost.latency_gpu_ms == CostModel{}.latency_gpu_ms);
        const SimConfig back = sim_config_from_json(nlohmann::json::parse(to_json(c).dump()));
        CHECK(back.cost == c.cost);
    }

    TEST_CASE("bad configs")
    {
        CHECK_THROWS_AS(sim_config_from_json(nlohmann::json::parse(R"({"latency_cpu": 1})")), ParseError);
        CHECK_THROWS_AS(sim_config_from_json(nlohmann::json::parse(R"({"latency_gpu_ms": -1})")), ConfigError);
        CHECK_THROWS_AS(sim_config_from_json(nlohmann::json::parse(R"({"pcie_bw_bytes_per_ms": 0})")), ConfigError);
        CHECK_THROWS_AS(sim_config_from_json(nlohmann::json::parse(R"({"cache_capacity": -2})")), ParseError);
        CHECK_THROWS_AS(read_sim_config("/nonexistent/cost.json"), IoError);
    }
}
