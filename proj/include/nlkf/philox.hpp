#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

namespace nlkf {

// Philox4x32-10 counter-based generator. Streams are addressed by a
// 128-bit counter and a 64-bit key, so any block can be regenerated
// independently of the rest of the stream and identically across
// languages and thread schedules.
struct Philox4x32 {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::uint64_t key) {
        auto k0 = static_cast<std::uint32_t>(key);
        auto k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
                   static_cast<std::uint32_t>(p0)};
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return ctr;
    }
};

// FNV-1a 32-bit, used to key streams by system id.
inline std::uint32_t fnv1a32(const std::string& s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

// Sequential Gaussian/uniform draws from a fixed (key, stream prefix).
// The counter layout is (block_index, stream_tag, run_index, domain_hash).
// Uniforms are (word + 0.5) * 2^-32; normals come from Box-Muller applied
// to consecutive uniform pairs, two pairs per block.
class RandomStream {
public:
    RandomStream(std::uint64_t key, std::uint32_t domain_hash, std::uint32_t run_index,
                 std::uint32_t stream_tag)
        : key_(key), prefix_{stream_tag, run_index, domain_hash} {}

    double next_uniform() {
        if (word_ == 4) refill();
        return (static_cast<double>(words_[word_++]) + 0.5) * 0x1p-32;
    }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * M_PI * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    void refill() {
        words_ = Philox4x32::block({block_, prefix_[0], prefix_[1], prefix_[2]}, key_);
        ++block_;
        word_ = 0;
    }

    std::uint64_t key_;
    std::array<std::uint32_t, 3> prefix_;
    std::uint32_t block_ = 0;
    std::array<std::uint32_t, 4> words_{};
    int word_ = 4;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace nlkf
