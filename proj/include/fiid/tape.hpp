#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace fiid {

/// Per-vertex iid randomness.  Every value is a pure function of
/// (seed, vertex, phase, index, kind); the tape additionally keeps a ledger of
/// which indices were read.  A re-read of an index is counted once.
class Tape {
public:
    explicit Tape(std::uint64_t seed);
    /// Same streams as `base` inside `keep`, streams keyed on `other_seed` elsewhere.
    Tape(const Tape& base, std::vector<int> keep, std::uint64_t other_seed);

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t seed() const { return seed_; }

    // Stream values without accounting.
    double peek_uniform(int v, std::string_view phase, std::uint64_t index) const;
    bool peek_bit(int v, std::string_view phase, std::uint64_t index) const;

    // Sequential draws: each (vertex, phase) has its own cursor.
    double draw_uniform(int v, std::string_view phase);
    std::vector<bool> draw_bits(int v, std::string_view phase, int k);

    // Random-access draws, accounted.
    double read_uniform(int v, std::string_view phase, std::uint64_t index);
    bool read_bit(int v, std::string_view phase, std::uint64_t index);

    /// Total distinct bits a vertex may read over all phases; nullopt = unlimited.
    void set_bit_cap(std::optional<std::uint64_t> cap) { bit_cap_ = cap; }
    std::optional<std::uint64_t> bit_cap() const { return bit_cap_; }

    struct Usage {
        std::uint64_t bits = 0;
        std::uint64_t uniforms = 0;
    };
    /// (vertex, phase) -> counts, for every pair ever touched.
    std::map<std::pair<int, std::string>, Usage> usage_report() const;
    std::uint64_t bits_used(int v) const;
    std::vector<int> vertices_used(std::string_view phase) const;
    void write_usage_csv(std::ostream& os) const;

    // Locality ledger.
    void record_violation(int v, std::string_view phase);
    std::uint64_t locality_violations() const { return violations_.load(); }
    std::vector<std::string> violation_samples() const;

private:
    struct Slot {
        std::unordered_set<std::uint64_t> bits;
        std::unordered_set<std::uint64_t> uniforms;
        std::uint64_t bit_cursor = 0;
        std::uint64_t uniform_cursor = 0;
    };
    std::uint64_t key_seed(int v) const;
    int phase_id(std::string_view phase);
    Slot& slot(int v, int pid);
    void charge_bits(int v, Slot& s, std::span<const std::uint64_t> indices);

    std::uint64_t seed_;
    std::optional<std::uint64_t> other_seed_;
    std::vector<char> keep_;

    std::optional<std::uint64_t> bit_cap_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, int> phase_ids_;
    std::vector<std::string> phase_names_;
    std::unordered_map<std::uint64_t, Slot> slots_;
    std::unordered_map<int, std::uint64_t> bits_per_vertex_;
    std::atomic<std::uint64_t> violations_{0};
    std::vector<std::string> violation_samples_;
};

/// A phase-bound window on a tape.  When `allowed` is non-empty, reads at
/// vertices outside it are recorded as locality violations.
class TapeView {
public:
    TapeView(Tape& tape, std::string phase, std::vector<int> allowed = {});

    double uniform(int v);
    std::vector<bool> bits(int v, int k);
    double uniform_at(int v, std::uint64_t index);
    bool bit_at(int v, std::uint64_t index);
    TapeView sub(const std::string& suffix) const;

    Tape& tape() const { return *tape_; }
    const std::string& phase() const { return phase_; }

private:
    void check(int v);
    Tape* tape_;
    std::string phase_;
    std::vector<int> allowed_;  // sorted
};

/// Deterministic 64-bit mixing (splitmix64 finaliser).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

}  // namespace fiid
