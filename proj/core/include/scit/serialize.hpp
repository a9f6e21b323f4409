#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "scit/errors.hpp"

namespace scit {

// Little-endian byte stream used by the .sclm / .scit / .scsw formats.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) { append(&v, 2); }
    void u32(uint32_t v) { append(&v, 4); }
    void u64(uint64_t v) { append(&v, 8); }
    void f32(float v) { append(&v, 4); }
    void bytes(const void* p, size_t n) { append(p, n); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        append(s.data(), s.size());
    }
    void f32_array(const float* p, size_t n) { append(p, n * 4); }

    const std::vector<uint8_t>& data() const { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }

private:
    void append(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : ByteReader(v.data(), v.size()) {}

    uint8_t u8() { return take<uint8_t>(); }
    uint16_t u16() { return take<uint16_t>(); }
    uint32_t u32() { return take<uint32_t>(); }
    uint64_t u64() { return take<uint64_t>(); }
    float f32() { return take<float>(); }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    void bytes(void* out, size_t n) {
        need(n);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }
    std::vector<float> f32_array(size_t n) {
        need(n * 4);
        std::vector<float> v(n);
        std::memcpy(v.data(), data_ + pos_, n * 4);
        pos_ += n * 4;
        return v;
    }

    bool at_end() const { return pos_ == size_; }
    size_t remaining() const { return size_ - pos_; }

private:
    template <class T>
    T take() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(size_t n) {
        if (pos_ + n > size_) throw SerializeError("truncated or corrupt file");
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& data);
// Writes to <path>.tmp then renames, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& data);
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace scit
