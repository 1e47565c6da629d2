#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "signlang/error.hpp"

namespace signlang {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

/// CRC-32 (IEEE 802.3, as in zlib/PNG).
std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> data) {
        buffer_.insert(buffer_.end(), data.begin(), data.end());
    }
    void text(std::string_view s) {
        bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }
    template <typename T>
    void scalar(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        buffer_.insert(buffer_.end(), p, p + sizeof(T));
    }
    void u8(std::uint8_t v) { scalar(v); }
    void u32(std::uint32_t v) { scalar(v); }
    void u64(std::uint64_t v) { scalar(v); }
    void f64(double v) { scalar(v); }
    void f64s(std::span<const double> values) {
        bytes({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
    }
    void f32s(std::span<const float> values) {
        bytes({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
    }

    /// Appends CRC-32 of everything written so far.
    void seal() { u32(crc32(buffer_)); }

    const std::vector<std::uint8_t>& buffer() const noexcept { return buffer_; }
    std::vector<std::uint8_t> take() && { return std::move(buffer_); }

private:
    std::vector<std::uint8_t> buffer_;
};

/// Bounds-checked little-endian reader. Reading past the end throws
/// LoadError(Truncated).
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    /// Throws Truncated unless `n` more bytes are available.
    void require(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw LoadError(LoadErrorKind::Truncated,
                            std::string("file ends inside ") + what);
        }
    }

    std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
        require(n, what);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    template <typename T>
    T scalar(const char* what) {
        T value;
        std::memcpy(&value, bytes(sizeof(T), what).data(), sizeof(T));
        return value;
    }
    std::uint32_t peek_u32(const char* what) const {
        require(4, what);
        std::uint32_t value;
        std::memcpy(&value, data_.data() + pos_, 4);
        return value;
    }
    std::uint8_t u8(const char* what) { return scalar<std::uint8_t>(what); }
    std::uint32_t u32(const char* what) { return scalar<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return scalar<std::uint64_t>(what); }
    double f64(const char* what) { return scalar<double>(what); }
    void f64s(std::span<double> out, const char* what) {
        std::memcpy(out.data(), bytes(out.size_bytes(), what).data(), out.size_bytes());
    }
    void f32s(std::span<float> out, const char* what) {
        std::memcpy(out.data(), bytes(out.size_bytes(), what).data(), out.size_bytes());
    }

    /// Checks that exactly a trailing CRC-32 remains and that it matches
    /// every byte before it.
    void verify_seal() {
        if (remaining() < 4) {
            throw LoadError(LoadErrorKind::Truncated, "file ends before checksum");
        }
        if (remaining() > 4) {
            throw LoadError(LoadErrorKind::ChecksumMismatch,
                            std::to_string(remaining() - 4) + " unexpected trailing bytes");
        }
        const std::uint32_t expected = crc32(data_.first(pos_));
        const std::uint32_t stored = u32("checksum");
        if (stored != expected) {
            throw LoadError(LoadErrorKind::ChecksumMismatch, "CRC-32 does not match contents");
        }
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

bool is_valid_utf8(std::string_view text) noexcept;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames, so readers never see
/// a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace signlang
