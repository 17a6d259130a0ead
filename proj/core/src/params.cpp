#include "ivlm/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ivlm {

Tensor ParamStore::add_entry(const std::string& name, Tensor t) {
    if (index_.count(name)) {
        throw std::invalid_argument("params: duplicate parameter name '" + name + "'");
    }
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, t, false});
    return t;
}

Tensor ParamStore::create(const std::string& name, Shape shape, double init_std, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.normal() * init_std;
    return add_entry(name, t);
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape) {
    return add_entry(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::create_ones(const std::string& name, Shape shape) {
    return add_entry(name, Tensor::full(std::move(shape), 1.0));
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("params: unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
}

bool ParamStore::frozen(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("params: unknown parameter '" + name + "'");
    return entries_[it->second].frozen;
}

void ParamStore::set_frozen(const std::string& name, bool frozen) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("params: unknown parameter '" + name + "'");
    entries_[it->second].frozen = frozen;
}

void ParamStore::freeze_matching(const std::string& prefix, bool frozen) {
    for (auto& e : entries_) {
        if (e.name.rfind(prefix, 0) == 0) e.frozen = frozen;
    }
}

void ParamStore::unfreeze_all() {
    for (auto& e : entries_) e.frozen = false;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

std::size_t ParamStore::total_parameters() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

bool read_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

bool read_u64(std::istream& is, std::uint64_t& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

bool read_f64(std::istream& is, double& v) {
    std::uint64_t bits;
    if (!read_u64(is, bits)) return false;
    std::memcpy(&v, &bits, 8);
    return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, 5);
    write_u32(os, kCheckpointVersion);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        Tensor t = params.tensor(i);
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) write_u64(os, d);
        for (double v : t.data()) write_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    std::uint32_t version = 0;
    if (!read_u32(is, version) || version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version in '" + path + "'");
    }
    std::size_t loaded = 0;
    while (true) {
        std::uint32_t name_len = 0;
        if (!read_u32(is, name_len)) break;  // clean EOF
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) {
            throw std::runtime_error("checkpoint: truncated record in '" + path + "'");
        }
        std::uint32_t rank = 0;
        if (!read_u32(is, rank)) throw std::runtime_error("checkpoint: truncated record in '" + path + "'");
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint64_t d = 0;
            if (!read_u64(is, d)) throw std::runtime_error("checkpoint: truncated record in '" + path + "'");
            shape[i] = static_cast<std::size_t>(d);
        }
        if (!params.has(name)) {
            throw std::runtime_error("checkpoint: parameter '" + name + "' not present in model");
        }
        Tensor t = params.get(name);
        if (t.shape() != shape) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " + shape_str(shape) +
                                     " vs model " + shape_str(t.shape()));
        }
        for (double& v : t.data()) {
            if (!read_f64(is, v)) throw std::runtime_error("checkpoint: truncated payload in '" + path + "'");
        }
        ++loaded;
    }
    if (loaded != params.size()) {
        throw std::runtime_error("checkpoint: '" + path + "' holds " + std::to_string(loaded) +
                                 " tensors, model expects " + std::to_string(params.size()));
    }
}

}  // namespace ivlm
