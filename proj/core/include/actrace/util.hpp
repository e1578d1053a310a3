#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace actrace {

// Packed 5-gram of syscall ids. 12 bits per id, so packing is injective
// for alphabets up to 4096 syscalls.
using WordKey = std::uint64_t;

inline constexpr int kWordLen = 5;
inline constexpr int kWordIdBits = 12;
inline constexpr int kMaxAlphabet = 1 << kWordIdBits;

using Word = std::array<std::uint16_t, kWordLen>;

inline WordKey pack_word(const Word& w) {
    WordKey key = 0;
    for (int i = 0; i < kWordLen; ++i)
        key |= static_cast<WordKey>(w[i] & 0xFFF) << (kWordIdBits * i);
    return key;
}

inline Word unpack_word(WordKey key) {
    Word w{};
    for (int i = 0; i < kWordLen; ++i)
        w[i] = static_cast<std::uint16_t>((key >> (kWordIdBits * i)) & 0xFFF);
    return w;
}

struct ThreadId {
    std::int32_t pid = 0;
    std::int32_t tid = 0;
    friend auto operator<=>(const ThreadId&, const ThreadId&) = default;
};

// FNV-1a, used for content ids and seeded sign hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h) {
    return fnv1a64(&v, sizeof(v), h);
}

// splitmix64 finalizer; good enough to derive independent seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::string hex16(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace actrace
