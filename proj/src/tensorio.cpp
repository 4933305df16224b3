#include "suplid/tensorio.hpp"

#include "byteio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unistd.h>

namespace suplid::io {

namespace {

// Largest payload accepted by read_tensor (64 GiB).
constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 36;

using detail::put_le;

template <typename UInt>
UInt get_le(std::istream& in, std::string_view field) {
    return detail::get_le<UInt>(in, "SLTF: truncated header", field);
}

template <typename T>
void write_payload(std::ostream& out, std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (const T& v : values) {
            using U = std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint32_t>;
            put_le(out, std::bit_cast<U>(v));
        }
    }
}

template <typename T>
void read_payload(std::istream& in, std::span<T> values) {
    // Chunked so a lying header cannot force one huge read before truncation
    // is detected.
    constexpr std::size_t kChunkBytes = std::size_t{1} << 24;
    auto* dst = reinterpret_cast<char*>(values.data());
    std::size_t remaining = values.size_bytes();
    while (remaining > 0) {
        const std::size_t n = std::min(remaining, kChunkBytes);
        in.read(dst, static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw FormatError("SLTF: payload truncated (" + std::to_string(values.size_bytes() - remaining +
                              static_cast<std::size_t>(in.gcount())) + " of " +
                              std::to_string(values.size_bytes()) + " bytes)");
        dst += n;
        remaining -= n;
    }
    if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
        using U = std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint32_t>;
        for (T& v : values) {
            U u = std::bit_cast<U>(v);
            U swapped = 0;
            for (std::size_t i = 0; i < sizeof(U); ++i) swapped = static_cast<U>((swapped << 8) | ((u >> (8 * i)) & 0xFF));
            v = std::bit_cast<T>(swapped);
        }
    }
}

template <typename T>
Tensor read_typed(std::istream& in, Shape shape, std::size_t count) {
    std::vector<T> values;
    // Grow as bytes arrive rather than trusting the header up front.
    constexpr std::size_t kStep = (std::size_t{1} << 24) / sizeof(T);
    std::size_t done = 0;
    while (done < count) {
        const std::size_t n = std::min(kStep, count - done);
        values.resize(done + n);
        try {
            read_payload<T>(in, std::span<T>(values).subspan(done, n));
        } catch (const FormatError&) {
            throw FormatError("SLTF: payload truncated, header declares " + std::to_string(count) +
                              " elements (" + std::to_string(count * sizeof(T)) + " bytes)");
        }
        done += n;
    }
    return Tensor(std::move(shape), std::move(values));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string netpbm_token(std::istream& in, std::string_view kind) {
    std::string tok;
    int c = in.get();
    while (true) {
        while (c != EOF && std::isspace(c)) c = in.get();
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            continue;
        }
        break;
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw FormatError(std::string(kind) + ": truncated header");
    // `c` is the single whitespace byte that terminates the token; after the
    // maxval it separates header from pixel data.
    return tok;
}

std::size_t netpbm_number(std::istream& in, std::string_view kind, std::string_view field) {
    const std::string tok = netpbm_token(in, kind);
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != tok.size() || v == 0 || v > std::numeric_limits<std::uint32_t>::max())
        throw FormatError(std::string(kind) + ": invalid " + std::string(field) + " '" + tok + "'");
    return v;
}

Tensor read_netpbm(std::istream& in, std::string_view magic, std::size_t channels) {
    const std::string kind = "P" + std::string(magic.substr(1));
    const std::string got = netpbm_token(in, kind);
    if (got != magic) throw FormatError("unsupported image magic '" + got + "', expected " + std::string(magic));
    const std::size_t width = netpbm_number(in, kind, "width");
    const std::size_t height = netpbm_number(in, kind, "height");
    const std::size_t maxval = netpbm_number(in, kind, "maxval");
    if (maxval != 255) throw FormatError(kind + ": maxval must be 255, got " + std::to_string(maxval));

    Shape shape = channels == 1 ? Shape{height, width} : Shape{height, width, channels};
    const std::size_t count = height * width * channels;
    std::vector<std::uint8_t> pixels(count);
    in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(count));
    if (in.gcount() != static_cast<std::streamsize>(count))
        throw FormatError(kind + ": truncated pixel data (" + std::to_string(in.gcount()) + " of " +
                          std::to_string(count) + " bytes)");
    return Tensor(std::move(shape), std::move(pixels));
}

std::size_t write_netpbm(const Tensor& t, std::ostream& out, std::string_view magic) {
    const auto px = t.data<std::uint8_t>();
    std::ostringstream header;
    header << magic << '\n' << t.dim(1) << ' ' << t.dim(0) << "\n255\n";
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!out) throw IoError("failed writing image data");
    return h.size() + px.size();
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

template <typename Writer>
void save_atomic(const std::filesystem::path& path, Writer&& writer) {
    std::ostringstream buf(std::ios::binary);
    writer(buf);
    write_file_atomic(path, buf.str());
}

}  // namespace

std::size_t write_tensor(const Tensor& tensor, std::ostream& out) {
    out.write(kTensorMagic.data(), 4);
    put_le<std::uint16_t>(out, kTensorVersion);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.dtype()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.ndim()));
    for (auto d : tensor.shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max())
            throw ValidationError("SLTF: dimension " + std::to_string(d) + " exceeds u32");
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    switch (tensor.dtype()) {
        case DType::f32: write_payload(out, tensor.data<float>()); break;
        case DType::u8: write_payload(out, tensor.data<std::uint8_t>()); break;
        case DType::u16: write_payload(out, tensor.data<std::uint16_t>()); break;
        case DType::i32: write_payload(out, tensor.data<std::int32_t>()); break;
    }
    if (!out) throw IoError("SLTF: write failed");
    return 8 + 4 * tensor.ndim() + tensor.byte_size();
}

Tensor read_tensor(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (in.gcount() != 4 || std::string_view(magic.data(), 4) != kTensorMagic)
        throw FormatError("SLTF: bad magic");
    const auto version = get_le<std::uint16_t>(in, "version");
    if (version != kTensorVersion) throw FormatError("SLTF: unsupported version " + std::to_string(version));
    const auto code = get_le<std::uint8_t>(in, "dtype");
    if (code < 1 || code > 4) throw FormatError("SLTF: unsupported dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const auto ndim = get_le<std::uint8_t>(in, "ndim");
    if (ndim < 1 || ndim > kMaxTensorDims) throw FormatError("SLTF: ndim must be 1..4, got " + std::to_string(ndim));

    Shape shape(ndim);
    std::uint64_t count = 1;
    for (auto& d : shape) {
        d = get_le<std::uint32_t>(in, "dimension");
        if (d == 0) throw FormatError("SLTF: zero-sized dimension");
        if (count > kMaxPayloadBytes / d) throw FormatError("SLTF: dimension overflow");
        count *= d;
    }
    if (count * dtype_size(dtype) > kMaxPayloadBytes) throw FormatError("SLTF: dimension overflow");

    switch (dtype) {
        case DType::f32: return read_typed<float>(in, std::move(shape), count);
        case DType::u8: return read_typed<std::uint8_t>(in, std::move(shape), count);
        case DType::u16: return read_typed<std::uint16_t>(in, std::move(shape), count);
        case DType::i32: return read_typed<std::int32_t>(in, std::move(shape), count);
    }
    throw FormatError("SLTF: unsupported dtype");
}

Tensor read_ppm(std::istream& in) { return read_netpbm(in, "P6", 3); }
Tensor read_pgm(std::istream& in) { return read_netpbm(in, "P5", 1); }

std::size_t write_ppm(const Tensor& rgb, std::ostream& out) {
    rgb.expect(DType::u8, {0, 0, 3}, "PPM image");
    return write_netpbm(rgb, out, "P6");
}

std::size_t write_pgm(const Tensor& gray, std::ostream& out) {
    gray.expect(DType::u8, {0, 0}, "PGM image");
    return write_netpbm(gray, out, "P5");
}

std::string read_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing '" + path.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

Tensor load_tensor(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_tensor(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
    save_atomic(path, [&](std::ostream& out) { write_tensor(tensor, out); });
}

Tensor load_image(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_ppm(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Tensor load_mask(const std::filesystem::path& path) {
    if (path.extension() == ".slt") {
        Tensor t = load_tensor(path);
        t.expect(DType::u8, {0, 0}, path.string());
        return t;
    }
    auto in = open_in(path);
    try {
        return read_pgm(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_ppm(const Tensor& rgb, const std::filesystem::path& path) {
    save_atomic(path, [&](std::ostream& out) { write_ppm(rgb, out); });
}

void save_pgm(const Tensor& gray, const std::filesystem::path& path) {
    save_atomic(path, [&](std::ostream& out) { write_pgm(gray, out); });
}

}  // namespace suplid::io
