#include "clseg/binary_io.hpp"

#include <fstream>
#include <sstream>

#include "clseg/error.hpp"

namespace clseg::io {

void Reader::bytes(void* out, std::size_t n) {
    if (n > remaining()) {
        throw FormatError("truncated input: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                          ", " + std::to_string(remaining()) + " left");
    }
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
}

std::string Reader::str() {
    const auto n = u32();
    if (n > remaining()) throw FormatError("truncated input: string length " + std::to_string(n) + " overruns data");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
}

std::vector<double> Reader::f64_array(std::size_t count) {
    if (count > remaining() / sizeof(double)) {
        throw FormatError("truncated input: array of " + std::to_string(count) + " doubles overruns data");
    }
    std::vector<double> out(count);
    bytes(out.data(), count * sizeof(double));
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

} // namespace clseg::io
