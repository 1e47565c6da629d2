#include "signlang/binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace signlang {

const char* to_string(LoadErrorKind kind) noexcept {
    switch (kind) {
    case LoadErrorKind::Io: return "i/o error";
    case LoadErrorKind::BadMagic: return "bad magic";
    case LoadErrorKind::UnsupportedVersion: return "unsupported version";
    case LoadErrorKind::Truncated: return "truncated";
    case LoadErrorKind::ChecksumMismatch: return "checksum mismatch";
    case LoadErrorKind::DimensionMismatch: return "dimension mismatch";
    case LoadErrorKind::InvalidUtf8: return "invalid utf-8";
    case LoadErrorKind::Malformed: return "malformed";
    }
    return "unknown";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for buffers above 4 GiB.
    constexpr std::size_t kChunk = 1u << 30;
    while (!bytes.empty()) {
        const std::size_t n = std::min(bytes.size(), kChunk);
        crc = ::crc32(crc, bytes.data(), static_cast<uInt>(n));
        bytes = bytes.subspan(n);
    }
    return static_cast<std::uint32_t>(crc);
}

bool is_valid_utf8(std::string_view text) noexcept {
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    const auto* end = p + text.size();
    while (p < end) {
        const unsigned char c = *p;
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++p;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (static_cast<std::size_t>(end - p) < len) {
            return false;
        }
        for (std::size_t i = 1; i < len; ++i) {
            if ((p[i] & 0xC0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (p[i] & 0x3F);
        }
        // Overlong forms, surrogates, and code points past U+10FFFF.
        static constexpr std::uint32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMinForLength[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        p += len;
    }
    return true;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError(LoadErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw LoadError(LoadErrorKind::Io, "read failed for " + path.string());
    }
    return data;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open " + tmp.string() + " for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace signlang
