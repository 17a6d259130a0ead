#pragma once

#include "ivlm/rng.hpp"
#include "ivlm/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace ivlm {

// Named, ordered collection of learnable tensors with per-tensor freeze
// flags. Registration order is the serialization order.
class ParamStore {
public:
    Tensor create(const std::string& name, Shape shape, double init_std, Rng& rng);
    Tensor create_zeros(const std::string& name, Shape shape);
    Tensor create_ones(const std::string& name, Shape shape);

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor get(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    Tensor tensor(std::size_t i) const { return entries_[i].tensor; }
    bool frozen(std::size_t i) const { return entries_[i].frozen; }
    bool frozen(const std::string& name) const;
    void set_frozen(const std::string& name, bool frozen);
    void freeze_matching(const std::string& prefix, bool frozen);
    void unfreeze_all();

    void zero_grad();
    std::size_t total_parameters() const;

private:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool frozen = false;
    };
    Tensor add_entry(const std::string& name, Tensor t);
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Flat checkpoint file: magic "IVLM1", version u32 LE, then one record per
// tensor: name length u32, UTF-8 name, rank u32, dims u64 LE, payload f64 LE.
void save_checkpoint(const std::string& path, const ParamStore& params);
void load_checkpoint(const std::string& path, ParamStore& params);

inline constexpr char kCheckpointMagic[] = "IVLM1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace ivlm
