#include "moek/error.hpp"
#include "moek/trace/trace.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace moek;
using namespace moek::trace;

namespace {

GenConfig small(std::uint64_t seed, std::size_t tokens = 50)
{
    GenConfig cfg;
    cfg.layers = 4;
    cfg.experts_per_layer = 6;
    cfg.top_k = 2;
    cfg.n_decode_tokens = tokens;
    cfg.hot_path_prob = 0.3;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_SUITE("trace.generate")
{
    TEST_CASE("hot_path_prob = 1 repeats the hot path")
    {
        GenConfig cfg = small(3, 200);
        cfg.hot_path_prob = 1.0;
        const Trace t = generate_trace(cfg);
        const auto hot = hot_path(cfg);
        CHECK(t.events.size() == 200);
        for (const auto& e : t.events)
            CHECK(e.path == hot);
        const PathStats s = path_stats(t);
        REQUIRE(s.paths.size() == 1);
        CHECK(s.paths[0].count == 200);
    }

    TEST_CASE("uniform routing stays within binomial bounds")
    {
        GenConfig cfg;
        cfg.layers = 4;
        cfg.experts_per_layer = 8;
        cfg.top_k = 2;
        cfg.n_decode_tokens = 10'000;
        cfg.hot_path_prob = 0.0;
        cfg.zipf_s = 0.0;
        cfg.seed = 11;
        const ExpertFreq f = expert_freq(generate_trace(cfg));
        const double n = 10'000.0, p = 2.0 / 8.0;
        const double sigma = std::sqrt(n * p * (1 - p));
        for (std::size_t l = 0; l < f.layers; ++l)
            for (std::size_t e = 0; e < f.experts_per_layer; ++e)
                CHECK(std::abs(static_cast<double>(f(l, e)) - n * p) <= 3 * sigma);
    }

    TEST_CASE("fixed seed is reproducible")
    {
        CHECK(generate_trace(small(5, 300)) == generate_trace(small(5, 300)));
    }

    TEST_CASE("seed changes the hot path")
    {
        std::set<std::vector<ExpertId>> seen;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            GenConfig cfg;
            cfg.seed = seed;
            seen.insert(hot_path(cfg));
        }
        CHECK(seen.size() >= 19);
    }

    TEST_CASE("larger zipf exponent concentrates the top expert")
    {
        std::vector<double> share;
        for (double s : {0.0, 1.0, 2.0}) {
            GenConfig cfg;
            cfg.n_decode_tokens = 10'000;
            cfg.hot_path_prob = 0.0;
            cfg.zipf_s = s;
            cfg.seed = 2;
            const ExpertFreq f = expert_freq(generate_trace(cfg));
            double sum = 0.0;
            for (std::size_t l = 0; l < f.layers; ++l) {
                std::uint64_t top = 0;
                for (std::size_t e = 0; e < f.experts_per_layer; ++e)
                    top = std::max(top, f(l, e));
                sum += static_cast<double>(top) / static_cast<double>(f.layer_total(l));
            }
            share.push_back(sum / static_cast<double>(f.layers));
        }
        CHECK(share[0] < share[1]);
        CHECK(share[1] < share[2]);
    }

    TEST_CASE("hot experts differ across layers")
    {
        GenConfig cfg;
        cfg.hot_path_prob = 0.0;
        cfg.n_decode_tokens = 2000;
        const ExpertFreq f = expert_freq(generate_trace(cfg));
        std::set<std::size_t> tops;
        for (std::size_t l = 0; l < f.layers; ++l) {
            std::size_t best = 0;
            for (std::size_t e = 1; e < f.experts_per_layer; ++e)
                if (f(l, e) > f(l, best))
                    best = e;
            tops.insert(best);
        }
        CHECK(tops.size() > 1);
    }

    TEST_CASE("streams share the routing model")
    {
        GenConfig a = small(9, 400);
        GenConfig b = a;
        b.stream = 1;
        CHECK(hot_path(a) == hot_path(b));
        CHECK(generate_trace(a) != generate_trace(b));
        a.hot_path_prob = b.hot_path_prob = 1.0;
        CHECK(generate_trace(a) == generate_trace(b));
    }

    TEST_CASE("sequence layout")
    {
        GenConfig cfg = small(1);
        cfg.n_sequences = 3;
        cfg.n_prefill_tokens = 2;
        cfg.n_decode_tokens = 3;
        const Trace t = generate_trace(cfg);
        CHECK_NOTHROW(t.validate());
        REQUIRE(t.events.size() == 15);
        CHECK(t.events[5].token_index == 0);
        CHECK(t.events[6].phase == Phase::prefill);
        CHECK(t.events[7].phase == Phase::decode);
        const auto seqs = sequences(t);
        REQUIRE(seqs.size() == 3);
        CHECK(seqs[1].begin == 5);
        CHECK(seqs[1].prefill_end == 7);
        CHECK(seqs[1].end == 10);
    }

    TEST_CASE("events are valid and canonical")
    {
        const Trace t = generate_trace(small(12, 500));
        CHECK_NOTHROW(t.validate());
    }

    TEST_CASE("config errors")
    {
        GenConfig cfg;
        cfg.top_k = 9;
        CHECK_THROWS_AS(generate_trace(cfg), ConfigError);
        cfg = GenConfig{};
        cfg.hot_path_prob = 1.5;
        CHECK_THROWS_AS(generate_trace(cfg), ConfigError);
        cfg = GenConfig{};
        cfg.zipf_s = -1.0;
        CHECK_THROWS_AS(generate_trace(cfg), ConfigError);
    }
}

TEST_SUITE("trace.stats")
{
    TEST_CASE("single event")
    {
        Trace t{2, 4, 2, {{0, Phase::decode, {0, 3, 1, 2}}}};
        const PathStats s = path_stats(t);
        REQUIRE(s.paths.size() == 1);
        CHECK(s.paths[0].count == 1);
        const ExpertFreq f = expert_freq(t);
        CHECK(f(0, 0) == 1);
        CHECK(f(0, 3) == 1);
        CHECK(f(1, 1) == 1);
        CHECK(f(1, 2) == 1);
        CHECK(f.layer_total(0) == 2);
        CHECK(f.layer_total(1) == 2);
    }

    TEST_CASE("path counts match brute-force recount")
    {
        GenConfig cfg = small(21, 50);
        cfg.hot_path_prob = 0.4;
        cfg.experts_per_layer = 3;
        cfg.layers = 2;
        const Trace t = generate_trace(cfg);
        const PathStats s = path_stats(t);
        CHECK(s.total() == 50);
        std::size_t distinct = 0;
        for (std::size_t i = 0; i < t.events.size(); ++i) {
            bool first = true;
            std::uint64_t n = 0;
            for (std::size_t j = 0; j < t.events.size(); ++j) {
                if (t.events[j].path == t.events[i].path) {
                    ++n;
                    first = first && j >= i;
                }
            }
            if (!first)
                continue;
            ++distinct;
            auto it = std::find_if(s.paths.begin(), s.paths.end(),
                                   [&](const PathCount& p) { return p.path == t.events[i].path; });
            REQUIRE(it != s.paths.end());
            CHECK(it->count == n);
        }
        CHECK(s.paths.size() == distinct);
        for (std::size_t i = 1; i < s.paths.size(); ++i) {
            const auto& a = s.paths[i - 1];
            const auto& b = s.paths[i];
            CHECK((a.count > b.count || (a.count == b.count && a.path < b.path)));
        }
    }

    TEST_CASE("expert counts match naive membership count")
    {
        const Trace t = generate_trace(small(4, 300));
        const ExpertFreq f = expert_freq(t);
        for (std::size_t l = 0; l < t.layers; ++l) {
            CHECK(f.layer_total(l) == t.top_k * t.events.size());
            for (ExpertId e = 0; e < t.experts_per_layer; ++e) {
                std::uint64_t n = 0;
                for (const auto& ev : t.events) {
                    const auto sel = t.selection(ev, l);
                    n += std::find(sel.begin(), sel.end(), e) != sel.end();
                }
                CHECK(f(l, e) == n);
            }
        }
    }
}

TEST_SUITE("trace.io")
{
    TEST_CASE("round trip")
    {
        GenConfig cfg = small(8, 40);
        cfg.n_sequences = 2;
        cfg.n_prefill_tokens = 5;
        const Trace t = generate_trace(cfg);
        std::stringstream buf;
        write_trace(buf, t);
        CHECK(read_trace(buf) == t);
    }

    TEST_CASE("exact text")
    {
        Trace t{2, 4, 2, {{0, Phase::prefill, {0, 3, 1, 2}}, {1, Phase::decode, {1, 2, 0, 3}}}};
        std::stringstream buf;
        write_trace(buf, t);
        CHECK(buf.str() == "trace layers=2 experts=4 top_k=2\n0 prefill 0,3|1,2\n1 decode 1,2|0,3\n");
    }

    TEST_CASE("comments, blank lines and unsorted selections")
    {
        std::istringstream in("# generated by hand\n\ntrace layers=2 experts=4 top_k=2\n0 decode 3,0|2,1\n");
        const Trace t = read_trace(in);
        REQUIRE(t.events.size() == 1);
        CHECK(t.events[0].path == std::vector<ExpertId>{0, 3, 1, 2});
    }

    TEST_CASE("malformed input")
    {
        const char* bad[] = {
            "",
            "trace layers=2 experts=4\n",
            "trace layers=2 experts=4 top_k=5\n",
            "trace layers=2 experts=4 top_k=2\n0 decode 0,1\n",
            "trace layers=2 experts=4 top_k=2\n0 decode 0,1|2\n",
            "trace layers=2 experts=4 top_k=2\n0 decode 0,1|2,2\n",
            "trace layers=2 experts=4 top_k=2\n0 decode 0,1|2,4\n",
            "trace layers=2 experts=4 top_k=2\n0 sample 0,1|2,3\n",
            "trace layers=2 experts=4 top_k=2\nx decode 0,1|2,3\n",
            "trace layers=2 experts=4 top_k=2\n0 decode 0,1|2,3 extra\n",
            "trace layers=2 experts=4 top_k=2\n0 decode 0,1|2,3\n1 prefill 0,1|2,3\n",
        };
        for (const char* text : bad) {
            std::istringstream in(text);
            CHECK_THROWS_AS(read_trace(in), ParseError);
        }
    }

    TEST_CASE("missing file")
    {
        CHECK_THROWS_AS(read_trace("/nonexistent/trace.txt"), IoError);
    }

    TEST_CASE("validate rejects bad events")
    {
        Trace t{2, 4, 2, {{0, Phase::decode, {1, 0, 1, 2}}}};
        CHECK_THROWS_AS(t.validate(), InputError);
        t.events[0].path = {0, 1, 2};
        CHECK_THROWS_AS(t.validate(), InputError);
        t.events[0].path = {0, 1, 2, 9};
        CHECK_THROWS_AS(t.validate(), InputError);
    }
}
