#pragma once

/**
 * @file npy.hpp
 * @brief NPY 1.0 array files: '\x93NUMPY', version 1.0, little-endian u16
 *        header length, a Python-literal dict header padded with spaces and
 *        a trailing newline to a 64-byte boundary, then the raw C-order
 *        payload. Supported dtypes: '<f4', '<i8', '|u1'.
 */

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dq/core.hpp"
#include "dq/patchmask.hpp"

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace dq {

enum class DType { float32, int64, uint8 };

inline const char* dtype_descr(DType t) {
    switch (t) {
        case DType::float32: return "<f4";
        case DType::int64: return "<i8";
        case DType::uint8: return "|u1";
    }
    return "?";
}

inline std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::float32: return 4;
        case DType::int64: return 8;
        case DType::uint8: return 1;
    }
    return 0;
}

/// A typed, row-major array as stored in an NPY file.
struct NpyArray {
    std::vector<std::size_t> shape;
    std::variant<std::vector<float>, std::vector<std::int64_t>, std::vector<std::uint8_t>> data;

    DType dtype() const noexcept { return static_cast<DType>(data.index()); }

    std::size_t element_count() const noexcept {
        return std::visit([](const auto& v) { return v.size(); }, data);
    }

    template <class T>
    const std::vector<T>& as() const {
        if (const auto* v = std::get_if<std::vector<T>>(&data)) return *v;
        throw FormatError(std::string("array holds dtype ") + dtype_descr(dtype()));
    }

    friend bool operator==(const NpyArray&, const NpyArray&) = default;
};

namespace detail {

inline constexpr char kNpyMagic[] = "\x93NUMPY";
inline constexpr std::size_t kNpyAlign = 64;

inline std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

/// Minimal parser for the header dict: {'descr': ..., 'fortran_order': ..., 'shape': (...), }
class HeaderParser {
public:
    explicit HeaderParser(std::string_view text) : s_(text) {}

    void parse(std::string& descr, bool& fortran, std::vector<std::size_t>& shape) {
        bool have_descr = false, have_order = false, have_shape = false;
        expect('{');
        for (;;) {
            skip_ws();
            if (peek() == '}') break;
            const std::string key = read_string();
            expect(':');
            if (key == "descr") {
                descr = read_string();
                have_descr = true;
            } else if (key == "fortran_order") {
                fortran = read_bool();
                have_order = true;
            } else if (key == "shape") {
                shape = read_tuple();
                have_shape = true;
            } else {
                throw FormatError("unexpected header key '" + key + "'");
            }
            skip_ws();
            if (peek() == ',') ++pos_;
        }
        if (!have_descr || !have_order || !have_shape) throw FormatError("incomplete npy header");
    }

private:
    char peek() const {
        if (pos_ >= s_.size()) throw FormatError("truncated npy header");
        return s_[pos_];
    }
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    void expect(char c) {
        skip_ws();
        if (peek() != c) throw FormatError(std::string("malformed npy header: expected '") + c + "'");
        ++pos_;
    }
    std::string read_string() {
        skip_ws();
        const char q = peek();
        if (q != '\'' && q != '"') throw FormatError("malformed npy header: expected string");
        const auto end = s_.find(q, pos_ + 1);
        if (end == std::string_view::npos) throw FormatError("truncated npy header");
        std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
        pos_ = end + 1;
        return out;
    }
    bool read_bool() {
        skip_ws();
        if (s_.substr(pos_, 4) == "True") {
            pos_ += 4;
            return true;
        }
        if (s_.substr(pos_, 5) == "False") {
            pos_ += 5;
            return false;
        }
        throw FormatError("malformed npy header: expected True/False");
    }
    std::vector<std::size_t> read_tuple() {
        expect('(');
        std::vector<std::size_t> dims;
        for (;;) {
            skip_ws();
            if (peek() == ')') {
                ++pos_;
                break;
            }
            std::size_t v = 0;
            bool any = false;
            while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') {
                v = v * 10 + static_cast<std::size_t>(s_[pos_++] - '0');
                any = true;
            }
            if (!any) throw FormatError("malformed npy header: bad shape");
            dims.push_back(v);
            skip_ws();
            if (peek() == ',') ++pos_;
        }
        return dims;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

template <class T>
std::vector<T> read_payload(std::istream& in, std::size_t count) {
    std::vector<T> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
    return v;
}

}  // namespace detail

inline NpyArray read_array(std::istream& in) {
    char magic[6] = {};
    in.read(magic, 6);
    if (in.gcount() != 6 || std::memcmp(magic, detail::kNpyMagic, 6) != 0) {
        throw FormatError("bad magic");
    }
    unsigned char version[2] = {};
    in.read(reinterpret_cast<char*>(version), 2);
    if (in.gcount() != 2) throw FormatError("truncated npy preamble");
    if (version[0] != 1 || version[1] != 0) {
        throw FormatError("unsupported npy version " + std::to_string(version[0]) + "." +
                          std::to_string(version[1]));
    }
    unsigned char len_bytes[2] = {};
    in.read(reinterpret_cast<char*>(len_bytes), 2);
    if (in.gcount() != 2) throw FormatError("truncated npy preamble");
    const std::size_t header_len = len_bytes[0] | (static_cast<std::size_t>(len_bytes[1]) << 8);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (static_cast<std::size_t>(in.gcount()) != header_len) throw FormatError("truncated npy header");

    std::string descr;
    bool fortran = false;
    NpyArray out;
    detail::HeaderParser(header).parse(descr, fortran, out.shape);
    if (fortran) throw FormatError("fortran-order arrays are not supported");

    DType dtype;
    if (descr == "<f4") {
        dtype = DType::float32;
    } else if (descr == "<i8") {
        dtype = DType::int64;
    } else if (descr == "|u1" || descr == "<u1") {
        dtype = DType::uint8;
    } else {
        throw FormatError("unsupported dtype '" + descr + "'");
    }

    const std::size_t count = detail::shape_product(out.shape);
    const std::size_t expected = count * dtype_size(dtype);
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (payload.size() != expected) {
        throw FormatError("payload size mismatch (expected " + std::to_string(expected) + ")");
    }
    std::istringstream body(std::move(payload));
    switch (dtype) {
        case DType::float32: out.data = detail::read_payload<float>(body, count); break;
        case DType::int64: out.data = detail::read_payload<std::int64_t>(body, count); break;
        case DType::uint8: out.data = detail::read_payload<std::uint8_t>(body, count); break;
    }
    return out;
}

inline NpyArray read_array(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return read_array(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// The full file image: preamble, padded header, payload.
inline std::string encode_array(const NpyArray& array) {
    if (array.shape.empty()) throw ValidationError("cannot write a 0-d array");
    if (detail::shape_product(array.shape) != array.element_count()) {
        throw ValidationError("array shape does not match its element count");
    }
    if (array.element_count() == 0) throw ValidationError("cannot write an empty array");

    std::string dict = "{'descr': '";
    dict += dtype_descr(array.dtype());
    dict += "', 'fortran_order': False, 'shape': (";
    for (std::size_t d = 0; d < array.shape.size(); ++d) {
        dict += std::to_string(array.shape[d]);
        if (array.shape.size() == 1 || d + 1 < array.shape.size()) dict += ",";
        if (d + 1 < array.shape.size()) dict += " ";
    }
    dict += "), }";
    const std::size_t preamble = 10;
    std::size_t total = preamble + dict.size() + 1;
    total = (total + detail::kNpyAlign - 1) / detail::kNpyAlign * detail::kNpyAlign;
    dict.append(total - preamble - dict.size() - 1, ' ');
    dict += '\n';
    if (dict.size() > 0xffff) throw ValidationError("npy header too long");

    std::string out(detail::kNpyMagic, 6);
    out += '\x01';
    out += '\x00';
    out += static_cast<char>(dict.size() & 0xff);
    out += static_cast<char>((dict.size() >> 8) & 0xff);
    out += dict;
    std::visit(
        [&](const auto& v) {
            out.append(reinterpret_cast<const char*>(v.data()),
                       v.size() * sizeof(typename std::decay_t<decltype(v)>::value_type));
        },
        array.data);
    return out;
}

inline void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_array(const std::filesystem::path& path, const NpyArray& array) {
    write_bytes(path, encode_array(array));
}

// Typed views used by the tools.

/// 2-D '<f4' array -> FeatureMatrix (widened to double).
inline FeatureMatrix read_features(const std::filesystem::path& path) {
    const NpyArray a = read_array(path);
    if (a.shape.size() != 2) throw FormatError(path.string() + ": features must be 2-D");
    const auto& v = a.as<float>();
    return FeatureMatrix(a.shape[0], a.shape[1], std::vector<double>(v.begin(), v.end()));
}

/// Narrows to float32.
inline void write_features(const std::filesystem::path& path, const FeatureMatrix& features) {
    NpyArray a;
    a.shape = {features.num_samples(), features.dim()};
    a.data = std::vector<float>(features.data().begin(), features.data().end());
    write_array(path, a);
}

/// 1-D '<i8' array -> LabelVector.
inline LabelVector read_labels(const std::filesystem::path& path) {
    const NpyArray a = read_array(path);
    if (a.shape.size() != 1) throw FormatError(path.string() + ": labels must be 1-D");
    return LabelVector::from_labels(a.as<std::int64_t>());
}

inline void write_labels(const std::filesystem::path& path, const LabelVector& labels) {
    NpyArray a;
    a.shape = {labels.labels.size()};
    a.data = labels.labels;
    write_array(path, a);
}

/// 3-D (images x H x W) or 2-D (one image) '<f4' array -> attention maps.
inline std::vector<AttentionMap> read_attention(const std::filesystem::path& path) {
    const NpyArray a = read_array(path);
    std::vector<std::size_t> s = a.shape;
    if (s.size() == 2) s.insert(s.begin(), 1);
    if (s.size() != 3) throw FormatError(path.string() + ": attention must be 2-D or 3-D");
    const auto& v = a.as<float>();
    const std::size_t plane = s[1] * s[2];
    std::vector<AttentionMap> maps(s[0]);
    for (std::size_t n = 0; n < s[0]; ++n) {
        maps[n].image_id = n;
        maps[n].values = Grid(s[1], s[2],
                              std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(n * plane),
                                                  v.begin() + static_cast<std::ptrdiff_t>((n + 1) * plane)));
    }
    return maps;
}

}  // namespace dq
