#include "moek/trace/trace.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace moek::trace {

std::string_view to_string(Phase p) { return p == Phase::prefill ? "prefill" : "decode"; }

Phase parse_phase(std::string_view s)
{
    if (s == "prefill")
        return Phase::prefill;
    if (s == "decode")
        return Phase::decode;
    throw InputError("unknown phase '" + std::string(s) + "'");
}

void Trace::validate() const
{
    if (layers == 0 || experts_per_layer == 0 || top_k == 0)
        throw InputError("trace dimensions must be positive");
    if (top_k > experts_per_layer)
        throw InputError("trace top_k exceeds experts per layer");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        const std::string where = "event " + std::to_string(i);
        if (e.path.size() != layers * top_k)
            throw InputError(where + ": path has " + std::to_string(e.path.size()) + " ids, expected " +
                             std::to_string(layers * top_k));
        for (std::size_t l = 0; l < layers; ++l) {
            auto sel = selection(e, l);
            for (std::size_t k = 0; k < top_k; ++k) {
                if (sel[k] >= experts_per_layer)
                    throw InputError(where + ": expert id " + std::to_string(sel[k]) + " out of range at layer " +
                                     std::to_string(l));
                if (k > 0 && sel[k] <= sel[k - 1])
                    throw InputError(where + ": layer " + std::to_string(l) +
                                     " selection is not strictly ascending (duplicate or unsorted ids)");
            }
        }
    }
    (void)sequences(*this);
}

std::vector<Sequence> sequences(const Trace& t)
{
    std::vector<Sequence> out;
    bool in_decode = false;
    for (std::size_t i = 0; i < t.events.size(); ++i) {
        const auto& e = t.events[i];
        if (i == 0 || e.token_index <= t.events[i - 1].token_index) {
            if (!out.empty())
                out.back().end = i;
            out.push_back({i, i, i});
            in_decode = false;
        }
        if (e.phase == Phase::prefill) {
            if (in_decode)
                throw InputError("event " + std::to_string(i) + ": prefill token after decode in the same sequence");
            out.back().prefill_end = i + 1;
        } else {
            in_decode = true;
        }
    }
    if (!out.empty())
        out.back().end = t.events.size();
    return out;
}

void GenConfig::validate() const
{
    if (layers == 0 || experts_per_layer == 0 || top_k == 0)
        throw ConfigError("layers, experts_per_layer and top_k must be positive");
    if (top_k > experts_per_layer)
        throw ConfigError("top_k (" + std::to_string(top_k) + ") exceeds experts_per_layer (" +
                          std::to_string(experts_per_layer) + ")");
    if (!(hot_path_prob >= 0.0 && hot_path_prob <= 1.0))
        throw ConfigError("hot_path_prob must lie in [0, 1]");
    if (!(zipf_s >= 0.0) || !std::isfinite(zipf_s))
        throw ConfigError("zipf_s must be finite and >= 0");
    if (layers * top_k > std::numeric_limits<std::uint32_t>::max())
        throw ConfigError("layers x top_k too large");
}

namespace {

struct RoutingModel
{
    std::vector<std::vector<ExpertId>> rank_to_expert; // per layer
    std::vector<ExpertId> hot;
};

RoutingModel routing_model(const GenConfig& cfg)
{
    std::mt19937_64 rng(cfg.seed);
    RoutingModel m;
    m.rank_to_expert.resize(cfg.layers);
    for (auto& perm : m.rank_to_expert) {
        perm.resize(cfg.experts_per_layer);
        std::iota(perm.begin(), perm.end(), ExpertId{0});
        std::shuffle(perm.begin(), perm.end(), rng);
    }
    // Hot path: uniform top_k subset per layer, independent of the Zipf ranking.
    std::vector<ExpertId> pool(cfg.experts_per_layer);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        std::iota(pool.begin(), pool.end(), ExpertId{0});
        for (std::size_t k = 0; k < cfg.top_k; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
            std::swap(pool[k], pool[pick(rng)]);
        }
        std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.top_k));
        m.hot.insert(m.hot.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.top_k));
    }
    return m;
}

std::mt19937_64 stream_rng(const GenConfig& cfg)
{
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(cfg.stream + 1), static_cast<std::uint32_t>((cfg.stream + 1) >> 32)};
    return std::mt19937_64(seq);
}

} // namespace

std::vector<ExpertId> hot_path(const GenConfig& cfg)
{
    cfg.validate();
    return routing_model(cfg).hot;
}

Trace generate_trace(const GenConfig& cfg)
{
    cfg.validate();
    const RoutingModel model = routing_model(cfg);
    auto rng = stream_rng(cfg);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> weight(cfg.experts_per_layer);
    for (std::size_t r = 0; r < weight.size(); ++r)
        weight[r] = std::pow(static_cast<double>(r + 1), -cfg.zipf_s);

    Trace t;
    t.layers = cfg.layers;
    t.experts_per_layer = cfg.experts_per_layer;
    t.top_k = cfg.top_k;
    const std::size_t per_seq = cfg.n_prefill_tokens + cfg.n_decode_tokens;
    t.events.reserve(cfg.n_sequences * per_seq);

    std::vector<double> remaining(weight.size());
    std::vector<ExpertId> chosen(cfg.top_k);
    for (std::size_t s = 0; s < cfg.n_sequences; ++s) {
        for (std::size_t i = 0; i < per_seq; ++i) {
            RoutingEvent ev;
            ev.token_index = static_cast<std::uint32_t>(i);
            ev.phase = i < cfg.n_prefill_tokens ? Phase::prefill : Phase::decode;
            if (unit(rng) < cfg.hot_path_prob) {
                ev.path = model.hot;
            } else {
                ev.path.reserve(cfg.layers * cfg.top_k);
                for (std::size_t l = 0; l < cfg.layers; ++l) {
                    remaining = weight;
                    for (std::size_t k = 0; k < cfg.top_k; ++k) {
                        const double total = std::accumulate(remaining.begin(), remaining.end(), 0.0);
                        double u = unit(rng) * total;
                        std::size_t rank = 0, last = 0;
                        for (; rank < remaining.size(); ++rank) {
                            if (remaining[rank] == 0.0)
                                continue;
                            last = rank;
                            if (u < remaining[rank])
                                break;
                            u -= remaining[rank];
                        }
                        if (rank == remaining.size())
                            rank = last; // rounding left u past the end
                        remaining[rank] = 0.0;
                        chosen[k] = model.rank_to_expert[l][rank];
                    }
                    std::sort(chosen.begin(), chosen.end());
                    ev.path.insert(ev.path.end(), chosen.begin(), chosen.end());
                }
            }
            t.events.push_back(std::move(ev));
        }
    }
    return t;
}

std::uint64_t PathStats::total() const noexcept
{
    std::uint64_t n = 0;
    for (const auto& p : paths)
        n += p.count;
    return n;
}

PathStats path_stats(const Trace& t)
{
    std::map<std::vector<ExpertId>, std::uint64_t> counts;
    for (const auto& e : t.events)
        ++counts[e.path];
    PathStats s{t.layers, t.experts_per_layer, t.top_k, {}};
    s.paths.reserve(counts.size());
    for (auto& [path, n] : counts)
        s.paths.push_back({path, n});
    // map order is lexicographic already; stable sort keeps it among equal counts
    std::stable_sort(s.paths.begin(), s.paths.end(),
                     [](const PathCount& a, const PathCount& b) { return a.count > b.count; });
    return s;
}

std::uint64_t ExpertFreq::layer_total(std::size_t layer) const
{
    const auto first = counts.begin() + static_cast<std::ptrdiff_t>(layer * experts_per_layer);
    return std::accumulate(first, first + static_cast<std::ptrdiff_t>(experts_per_layer), std::uint64_t{0});
}

ExpertFreq expert_freq(const Trace& t)
{
    ExpertFreq f{t.layers, t.experts_per_layer, std::vector<std::uint64_t>(t.layers * t.experts_per_layer, 0)};
    for (const auto& e : t.events)
        for (std::size_t l = 0; l < t.layers; ++l)
            for (ExpertId id : t.selection(e, l))
                ++f.counts[l * t.experts_per_layer + id];
    return f;
}

// ---- text format -----------------------------------------------------------

void write_trace(std::ostream& out, const Trace& t)
{
    out << "trace layers=" << t.layers << " experts=" << t.experts_per_layer << " top_k=" << t.top_k << '\n';
    std::string line;
    for (const auto& e : t.events) {
        line.clear();
        line += std::to_string(e.token_index);
        line += ' ';
        line += to_string(e.phase);
        line += ' ';
        for (std::size_t i = 0; i < e.path.size(); ++i) {
            if (i > 0)
                line += (i % t.top_k == 0) ? '|' : ',';
            line += std::to_string(e.path[i]);
        }
        line += '\n';
        out << line;
    }
}

namespace {

[[noreturn]] void fail(std::size_t line_no, const std::string& what)
{
    throw ParseError("trace line " + std::to_string(line_no) + ": " + what);
}

std::uint64_t parse_uint(std::string_view s, std::size_t line_no, std::string_view what)
{
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        fail(line_no, "bad " + std::string(what) + " '" + std::string(s) + "'");
    return v;
}

std::size_t header_field(std::string_view token, std::string_view key, std::size_t line_no)
{
    if (token.size() <= key.size() + 1 || token.substr(0, key.size()) != key || token[key.size()] != '=')
        fail(line_no, "expected " + std::string(key) + "=<count>, got '" + std::string(token) + "'");
    return parse_uint(token.substr(key.size() + 1), line_no, key);
}

bool skippable(std::string_view line)
{
    const auto first = line.find_first_not_of(" \t\r");
    return first == std::string_view::npos || line[first] == '#';
}

} // namespace

Trace read_trace(std::istream& in)
{
    std::string line;
    std::size_t line_no = 0;
    Trace t;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (skippable(line))
            continue;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream fields(line);
        std::string a, b, c, d, extra;
        fields >> a >> b >> c;
        if (!have_header) {
            fields >> d;
            if (a != "trace" || d.empty() || (fields >> extra))
                fail(line_no, "expected header 'trace layers=<n> experts=<n> top_k=<n>'");
            t.layers = header_field(b, "layers", line_no);
            t.experts_per_layer = header_field(c, "experts", line_no);
            t.top_k = header_field(d, "top_k", line_no);
            if (t.layers == 0 || t.experts_per_layer == 0 || t.top_k == 0 || t.top_k > t.experts_per_layer)
                fail(line_no, "inconsistent trace dimensions");
            have_header = true;
            continue;
        }
        if (c.empty() || (fields >> extra))
            fail(line_no, "expected '<token_index> <prefill|decode> <path>'");

        RoutingEvent ev;
        const auto idx = parse_uint(a, line_no, "token index");
        if (idx > std::numeric_limits<std::uint32_t>::max())
            fail(line_no, "token index out of range");
        ev.token_index = static_cast<std::uint32_t>(idx);
        try {
            ev.phase = parse_phase(b);
        } catch (const InputError& e) {
            fail(line_no, e.what());
        }
        std::string_view rest = c;
        std::size_t layer = 0;
        while (true) {
            const auto bar = rest.find('|');
            std::string_view group = rest.substr(0, bar);
            const std::size_t start = ev.path.size();
            while (true) {
                const auto comma = group.find(',');
                const auto id = parse_uint(group.substr(0, comma), line_no, "expert id");
                if (id >= t.experts_per_layer)
                    fail(line_no, "expert id " + std::to_string(id) + " out of range at layer " +
                                      std::to_string(layer));
                ev.path.push_back(static_cast<ExpertId>(id));
                if (comma == std::string_view::npos)
                    break;
                group.remove_prefix(comma + 1);
            }
            if (ev.path.size() - start != t.top_k)
                fail(line_no, "layer " + std::to_string(layer) + " selects " + std::to_string(ev.path.size() - start) +
                                  " experts, expected " + std::to_string(t.top_k));
            std::sort(ev.path.begin() + static_cast<std::ptrdiff_t>(start), ev.path.end());
            if (std::adjacent_find(ev.path.begin() + static_cast<std::ptrdiff_t>(start), ev.path.end()) !=
                ev.path.end())
                fail(line_no, "layer " + std::to_string(layer) + " selects the same expert twice");
            ++layer;
            if (bar == std::string_view::npos)
                break;
            rest.remove_prefix(bar + 1);
        }
        if (layer != t.layers)
            fail(line_no, "path has " + std::to_string(layer) + " layers, expected " + std::to_string(t.layers));
        t.events.push_back(std::move(ev));
    }
    if (!have_header)
        throw ParseError("trace: missing header line");
    try {
        (void)sequences(t);
    } catch (const InputError& e) {
        throw ParseError(std::string("trace: ") + e.what());
    }
    return t;
}

void write_trace(const std::string& path, const Trace& t)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    write_trace(out, t);
    if (!out.flush())
        throw IoError("write to '" + path + "' failed");
}

Trace read_trace(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open trace '" + path + "'");
    return read_trace(in);
}

} // namespace moek::trace
