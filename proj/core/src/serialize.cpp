#include "scit/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace scit {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw SerializeError("cannot open file: " + path);
    const auto size = static_cast<size_t>(in.tellg());
    in.seekg(0);
    std::vector<uint8_t> buf(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size)))
        throw SerializeError("cannot read file: " + path);
    return buf;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw SerializeError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw SerializeError("write failed: " + path);
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& data) {
    const std::string tmp = path + ".tmp";
    write_file_bytes(tmp, data);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw SerializeError("rename failed for " + path + ": " + ec.message());
}

void write_text_atomic(const std::string& path, const std::string& text) {
    std::vector<uint8_t> bytes(text.begin(), text.end());
    write_file_atomic(path, bytes);
}

std::string read_text_file(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

}  // namespace scit
