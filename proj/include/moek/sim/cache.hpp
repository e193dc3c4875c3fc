#pragma once

#include "moek/trace/trace.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <list>
#include <optional>
#include <unordered_map>
#include <vector>

namespace moek::sim {

struct ExpertKey
{
    std::uint32_t layer = 0;
    trace::ExpertId expert = 0;

    friend auto operator<=>(const ExpertKey&, const ExpertKey&) = default;
};

/// GPU-side expert cache with least-recently-used eviction, shared by all
/// layers.
class LruCache
{
public:
    explicit LruCache(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return order_.size(); }
    bool contains(ExpertKey key) const { return index_.contains(pack(key)); }

    /// Marks a resident expert as most recently used. False if absent.
    bool touch(ExpertKey key);

    /// Refreshes a resident key, otherwise inserts it, evicting the least
    /// recently used entry when full. Returns the evicted key, if any.
    /// With capacity 0 nothing is ever stored.
    std::optional<ExpertKey> insert(ExpertKey key);

    /// Residents from most to least recently used.
    std::vector<ExpertKey> contents() const { return {order_.begin(), order_.end()}; }

private:
    static std::uint64_t pack(ExpertKey k) { return (std::uint64_t{k.layer} << 32) | k.expert; }

    std::size_t capacity_;
    std::list<ExpertKey> order_; // front = most recent
    std::unordered_map<std::uint64_t, std::list<ExpertKey>::iterator> index_;
};

inline std::optional<ExpertKey> cache_insert(LruCache& cache, ExpertKey key) { return cache.insert(key); }

} // namespace moek::sim
