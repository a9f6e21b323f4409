#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace scit {

struct Sha256Digest {
    std::array<uint8_t, 32> bytes{};

    std::string hex() const;
    bool operator==(const Sha256Digest&) const = default;
};

class Sha256 {
public:
    Sha256();
    void update(const void* data, size_t len);
    Sha256Digest finish();

private:
    void process_block(const uint8_t* block);

    std::array<uint32_t, 8> state_{};
    std::array<uint8_t, 64> buffer_{};
    size_t buffer_len_ = 0;
    uint64_t total_len_ = 0;
};

Sha256Digest sha256(const void* data, size_t len);
Sha256Digest sha256(const std::vector<uint8_t>& data);
Sha256Digest sha256_file(const std::string& path);

}  // namespace scit
