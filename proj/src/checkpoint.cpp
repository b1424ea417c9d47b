#include "estas/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace estas {

namespace {

constexpr char kMagic[] = "ESTASCKPT";
constexpr std::size_t kMagicLen = 9;
constexpr unsigned char kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double x;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
}

}  // namespace

void write_params(std::ostream& os, const ParameterSet& params) {
    os.write(kMagic, kMagicLen);
    const unsigned char ver = kVersion;
    os.write(reinterpret_cast<const char*>(&ver), 1);
    write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const std::string& name : params.names()) {
        const Tensor& t = params.at(name).value;
        require_finite(t, "checkpoint parameter '" + name + "'");
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
        for (double x : t.v) write_f64(os, x);
    }
    if (!os) throw std::runtime_error("checkpoint: write failure");
}

ParameterSet read_params(std::istream& is) {
    char magic[kMagicLen];
    is.read(magic, kMagicLen);
    if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    unsigned char ver = 0;
    is.read(reinterpret_cast<char*>(&ver), 1);
    if (!is || ver != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    const std::uint32_t count = read_u32(is);
    ParameterSet params;
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated name");
        const std::uint32_t rank = read_u32(is);
        std::vector<std::size_t> shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(read_u32(is));
        Tensor t = Tensor::zeros(shape);
        for (double& x : t.v) x = read_f64(is);
        require_finite(t, "checkpoint parameter '" + name + "'");
        params.add(name, std::move(t));
    }
    return params;
}

void save_checkpoint(const std::string& path, const ParameterSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_params(os, params);
}

ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return read_params(is);
}

void write_vector_block(std::ostream& os, const std::vector<Tensor>& vectors,
                        std::size_t dim) {
    write_u32(os, static_cast<std::uint32_t>(vectors.size()));
    write_u32(os, static_cast<std::uint32_t>(dim));
    for (const Tensor& t : vectors) {
        if (t.numel() != dim) throw std::invalid_argument("vector block: dim mismatch");
        for (double x : t.v) write_f64(os, x);
    }
}

std::vector<Tensor> read_vector_block(std::istream& is) {
    const std::uint32_t count = read_u32(is);
    const std::uint32_t dim = read_u32(is);
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t = Tensor::zeros({dim});
        for (double& x : t.v) x = read_f64(is);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace estas
