#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moek::trace {

using ExpertId = std::uint32_t;

enum class Phase { prefill, decode };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view s);

/// One token's trip through the model. `path` is layer-grouped: layer l's
/// selection occupies path[l * top_k, (l + 1) * top_k), sorted ascending.
struct RoutingEvent
{
    std::uint32_t token_index = 0;
    Phase phase = Phase::decode;
    std::vector<ExpertId> path;

    friend bool operator==(const RoutingEvent&, const RoutingEvent&) = default;
};

struct Trace
{
    std::size_t layers = 0;
    std::size_t experts_per_layer = 0;
    std::size_t top_k = 0;
    std::vector<RoutingEvent> events;

    std::span<const ExpertId> selection(const RoutingEvent& e, std::size_t layer) const
    {
        return std::span<const ExpertId>(e.path).subspan(layer * top_k, top_k);
    }

    std::size_t activation_count() const noexcept { return events.size() * layers * top_k; }

    /// Throws InputError on the first malformed event.
    void validate() const;

    friend bool operator==(const Trace&, const Trace&) = default;
};

/// A run of events belonging to one sequence: [begin, prefill_end) are the
/// prompt tokens, [prefill_end, end) the generated ones. A new sequence
/// starts wherever token_index fails to increase.
struct Sequence
{
    std::size_t begin = 0;
    std::size_t prefill_end = 0;
    std::size_t end = 0;
};

/// Throws InputError if a prefill event follows a decode event in a sequence.
std::vector<Sequence> sequences(const Trace& t);

struct GenConfig
{
    std::size_t layers = 32;
    std::size_t experts_per_layer = 8;
    std::size_t top_k = 2;
    std::size_t n_prefill_tokens = 0;
    std::size_t n_decode_tokens = 1000;
    double hot_path_prob = 0.3;
    double zipf_s = 1.2;
    std::uint64_t seed = 0;
    // Each sequence holds n_prefill_tokens + n_decode_tokens events.
    std::size_t n_sequences = 1;
    // Selects an independent token stream over the same routing model (hot
    // path and per-layer expert ranking depend on seed only).
    std::uint64_t stream = 0;

    void validate() const;
};

Trace generate_trace(const GenConfig& cfg);

/// The designated hot path generate_trace uses for this seed.
std::vector<ExpertId> hot_path(const GenConfig& cfg);

struct PathCount
{
    std::vector<ExpertId> path;
    std::uint64_t count = 0;

    friend bool operator==(const PathCount&, const PathCount&) = default;
};

struct PathStats
{
    std::size_t layers = 0;
    std::size_t experts_per_layer = 0;
    std::size_t top_k = 0;
    std::vector<PathCount> paths; // count descending, then lexicographic path

    std::uint64_t total() const noexcept;
};

PathStats path_stats(const Trace& t);

struct ExpertFreq
{
    std::size_t layers = 0;
    std::size_t experts_per_layer = 0;
    std::vector<std::uint64_t> counts; // layers x experts_per_layer

    std::uint64_t operator()(std::size_t layer, std::size_t expert) const
    {
        return counts[layer * experts_per_layer + expert];
    }
    std::uint64_t layer_total(std::size_t layer) const;
};

ExpertFreq expert_freq(const Trace& t);

// Line-based text format; grammar in docs/formats.md.
void write_trace(std::ostream& out, const Trace& t);
Trace read_trace(std::istream& in);
void write_trace(const std::string& path, const Trace& t);
Trace read_trace(const std::string& path);

} // namespace moek::trace
