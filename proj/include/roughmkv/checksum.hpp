#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

namespace roughmkv {

/// 64-bit FNV-1a, used to fingerprint rough paths and scenarios in reports.
class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void add(std::string_view s) { add_bytes(s.data(), s.size()); }
    void add(std::uint64_t v) { add_bytes(&v, sizeof v); }
    void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
    void add(std::span<const double> values) {
        for (double v : values) add(v);
    }
    std::uint64_t value() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) {
    Fnv1a h;
    h.add(s);
    return h.value();
}

}  // namespace roughmkv
