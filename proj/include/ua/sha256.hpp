#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace ua {

using Hash256 = std::array<std::uint8_t, 32>;

/// Streaming SHA-256 (OpenSSL EVP backed).
class Sha256 {
public:
    Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;
    ~Sha256();

    void update(const void* data, std::size_t len);
    Hash256 finish();

private:
    void* ctx_;
};

Hash256 sha256(const void* data, std::size_t len);
std::string hash_to_hex(const Hash256& h);
Hash256 hash_from_hex(const std::string& hex);

} // namespace ua
