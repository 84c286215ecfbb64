#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clseg::io {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

/// Append-only little-endian byte sink.
class Writer {
public:
    void bytes(const void* data, std::size_t n) { buf_.append(static_cast<const char*>(data), n); }

    template <class T>
    void pod(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&value, sizeof(T));
    }

    void u8(std::uint8_t v) { pod(v); }
    void u32(std::uint32_t v) { pod(v); }
    void u64(std::uint64_t v) { pod(v); }
    void f64(double v) { pod(v); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f64_array(std::span<const double> values) { bytes(values.data(), values.size() * sizeof(double)); }

    const std::string& buffer() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

/// Bounds-checked reader; throws FormatError on truncation.
class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    void bytes(void* out, std::size_t n);

    template <class T>
    T pod() {
        T value;
        bytes(&value, sizeof(T));
        return value;
    }

    std::uint8_t u8() { return pod<std::uint8_t>(); }
    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    double f64() { return pod<double>(); }
    std::string str();
    std::vector<double> f64_array(std::size_t count);

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

} // namespace clseg::io
