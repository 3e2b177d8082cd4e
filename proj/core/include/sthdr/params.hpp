#pragma once

#include "sthdr/autograd.hpp"
#include "sthdr/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>

namespace sthdr {

using TensorMap = std::map<std::string, Tensor>;

enum class InitKind {
    FanInUniform, // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    Zeros,
    Ones,
};

struct Init {
    InitKind kind = InitKind::Zeros;
    int fan_in = 1;
};

// Named learnable tensors. Declaring an existing name with an identical shape
// returns the existing tensor, which is how weights are shared; initial values
// are drawn in declaration order from one seeded stream.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

    const Tensor& declare(const std::string& name, const Shape& shape, Init init);

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get_mut(const std::string& name);

    const TensorMap& tensors() const noexcept { return tensors_; }
    TensorMap& tensors() noexcept { return tensors_; }

    // Learnable scalars, counting each shared tensor once.
    std::size_t count() const;
    // Number of declarations that resolved to an existing tensor.
    int share_count(const std::string& name) const;

private:
    TensorMap tensors_;
    std::map<std::string, int> declarations_;
    Rng rng_;
};

TensorMap zeros_like(const TensorMap& params);

// One forward evaluation. Parameters enter as leaves created on first use,
// so every use of a shared name feeds the same gradient buffer.
class Graph {
public:
    Graph(const ParamStore& params, bool track_grad) : params_(params), track_grad_(track_grad) {}

    Var param(const std::string& name);
    bool track_grad() const noexcept { return track_grad_; }

    // Adds scale × (leaf gradient) into grads[name] for every parameter used.
    void accumulate_grads(TensorMap& grads, Real scale = 1) const;

private:
    const ParamStore& params_;
    bool track_grad_;
    std::unordered_map<std::string, Var> leaves_;
};

} // namespace sthdr
