#include "fiid/tape.hpp"

#include <algorithm>

#include "fiid/errors.hpp"

namespace fiid {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {
constexpr std::uint64_t kUniformKind = 0x55;
constexpr std::uint64_t kBitKind = 0xb1;

std::uint64_t stream_word(std::uint64_t seed, int v, std::string_view phase,
                          std::uint64_t index, std::uint64_t kind) {
    std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
    h = mix64(h ^ hash_string(phase));
    h = mix64(h ^ kind);
    return mix64(h ^ index);
}

double to_unit(std::uint64_t w) { return static_cast<double>(w >> 11) * 0x1.0p-53; }
}  // namespace

Tape::Tape(std::uint64_t seed) : seed_(seed) {}

Tape::Tape(const Tape& base, std::vector<int> keep, std::uint64_t other_seed)
    : seed_(base.seed_), other_seed_(other_seed), bit_cap_(base.bit_cap_) {
    int mx = 0;
    for (int v : keep) mx = std::max(mx, v + 1);
    keep_.assign(mx, 0);
    for (int v : keep) keep_[v] = 1;
}

std::uint64_t Tape::key_seed(int v) const {
    if (!other_seed_) return seed_;
    if (v >= 0 && v < static_cast<int>(keep_.size()) && keep_[v]) return seed_;
    return *other_seed_;
}

double Tape::peek_uniform(int v, std::string_view phase, std::uint64_t index) const {
    return to_unit(stream_word(key_seed(v), v, phase, index, kUniformKind));
}

bool Tape::peek_bit(int v, std::string_view phase, std::uint64_t index) const {
    return (stream_word(key_seed(v), v, phase, index, kBitKind) >> 63) != 0;
}

int Tape::phase_id(std::string_view phase) {
    auto it = phase_ids_.find(std::string(phase));
    if (it != phase_ids_.end()) return it->second;
    int id = static_cast<int>(phase_names_.size());
    phase_names_.emplace_back(phase);
    phase_ids_.emplace(std::string(phase), id);
    return id;
}

Tape::Slot& Tape::slot(int v, int pid) {
    std::uint64_t k = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)) << 32) |
                      static_cast<std::uint32_t>(pid);
    return slots_[k];
}

void Tape::charge_bits(int v, Slot& s, std::span<const std::uint64_t> indices) {
    std::uint64_t fresh = 0;
    for (auto i : indices)
        if (!s.bits.count(i)) ++fresh;
    auto& total = bits_per_vertex_[v];
    if (bit_cap_ && total + fresh > *bit_cap_) throw BudgetExceeded(v, total + fresh, *bit_cap_);
    for (auto i : indices) s.bits.insert(i);
    total += fresh;
}

double Tape::draw_uniform(int v, std::string_view phase) {
    std::uint64_t idx;
    {
        std::lock_guard lk(mu_);
        auto& s = slot(v, phase_id(phase));
        idx = s.uniform_cursor++;
        s.uniforms.insert(idx);
    }
    return peek_uniform(v, phase, idx);
}

std::vector<bool> Tape::draw_bits(int v, std::string_view phase, int k) {
    if (k < 0) throw std::invalid_argument("negative bit count");
    std::vector<std::uint64_t> idx(k);
    {
        std::lock_guard lk(mu_);
        auto& s = slot(v, phase_id(phase));
        for (int i = 0; i < k; ++i) idx[i] = s.bit_cursor + i;
        charge_bits(v, s, idx);
        s.bit_cursor += k;
    }
    std::vector<bool> out(k);
    for (int i = 0; i < k; ++i) out[i] = peek_bit(v, phase, idx[i]);
    return out;
}

double Tape::read_uniform(int v, std::string_view phase, std::uint64_t index) {
    {
        std::lock_guard lk(mu_);
        slot(v, phase_id(phase)).uniforms.insert(index);
    }
    return peek_uniform(v, phase, index);
}

bool Tape::read_bit(int v, std::string_view phase, std::uint64_t index) {
    {
        std::lock_guard lk(mu_);
        auto& s = slot(v, phase_id(phase));
        std::uint64_t one[1] = {index};
        charge_bits(v, s, one);
    }
    return peek_bit(v, phase, index);
}

std::map<std::pair<int, std::string>, Tape::Usage> Tape::usage_report() const {
    std::lock_guard lk(mu_);
    std::map<std::pair<int, std::string>, Usage> out;
    for (const auto& [k, s] : slots_) {
        int v = static_cast<int>(k >> 32);
        int pid = static_cast<int>(k & 0xffffffffULL);
        out[{v, phase_names_[pid]}] = {s.bits.size(), s.uniforms.size()};
    }
    return out;
}

std::uint64_t Tape::bits_used(int v) const {
    std::lock_guard lk(mu_);
    auto it = bits_per_vertex_.find(v);
    return it == bits_per_vertex_.end() ? 0 : it->second;
}

std::vector<int> Tape::vertices_used(std::string_view phase) const {
    std::vector<int> out;
    for (const auto& [k, u] : usage_report())
        if (k.second == phase && (u.bits > 0 || u.uniforms > 0)) out.push_back(k.first);
    return out;
}

void Tape::write_usage_csv(std::ostream& os) const {
    os << "vertex,phase,bits_used,uniforms_used\n";
    for (const auto& [k, u] : usage_report())
        os << k.first << ',' << k.second << ',' << u.bits << ',' << u.uniforms << '\n';
}

void Tape::record_violation(int v, std::string_view phase) {
    violations_.fetch_add(1);
    std::lock_guard lk(mu_);
    if (violation_samples_.size() < 16)
        violation_samples_.push_back("vertex " + std::to_string(v) + " in phase " +
                                     std::string(phase));
}

std::vector<std::string> Tape::violation_samples() const {
    std::lock_guard lk(mu_);
    return violation_samples_;
}

// ---------------------------------------------------------------------------

TapeView::TapeView(Tape& tape, std::string phase, std::vector<int> allowed)
    : tape_(&tape), phase_(std::move(phase)), allowed_(std::move(allowed)) {
    std::sort(allowed_.begin(), allowed_.end());
}

void TapeView::check(int v) {
    if (!allowed_.empty() && !std::binary_search(allowed_.begin(), allowed_.end(), v))
        tape_->record_violation(v, phase_);
}

double TapeView::uniform(int v) {
    check(v);
    return tape_->draw_uniform(v, phase_);
}

std::vector<bool> TapeView::bits(int v, int k) {
    check(v);
    return tape_->draw_bits(v, phase_, k);
}

double TapeView::uniform_at(int v, std::uint64_t index) {
    check(v);
    return tape_->read_uniform(v, phase_, index);
}

bool TapeView::bit_at(int v, std::uint64_t index) {
    check(v);
    return tape_->read_bit(v, phase_, index);
}

TapeView TapeView::sub(const std::string& suffix) const {
    return TapeView(*tape_, phase_ + "." + suffix, allowed_);
}

}  // namespace fiid
