#include "sthdr/params.hpp"

#include "sthdr/errors.hpp"

#include <cmath>

namespace sthdr {

const Tensor& ParamStore::declare(const std::string& name, const Shape& shape, Init init) {
    auto it = tensors_.find(name);
    if (it != tensors_.end()) {
        if (it->second.shape() != shape)
            throw ShapeError("parameter '" + name + "' redeclared with shape " + to_string(shape) + ", existing " +
                             to_string(it->second.shape()));
        ++declarations_[name];
        return it->second;
    }
    Tensor t(shape);
    switch (init.kind) {
    case InitKind::FanInUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(init.fan_in));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-bound, bound);
        break;
    }
    case InitKind::Ones:
        t.fill(1);
        break;
    case InitKind::Zeros:
        break;
    }
    declarations_[name] = 0;
    return tensors_.emplace(name, std::move(t)).first->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::get_mut(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
}

int ParamStore::share_count(const std::string& name) const {
    auto it = declarations_.find(name);
    return it == declarations_.end() ? 0 : it->second;
}

TensorMap zeros_like(const TensorMap& params) {
    TensorMap out;
    for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape()));
    return out;
}

Var Graph::param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    Var v = Var::leaf(params_.get(name), track_grad_);
    leaves_.emplace(name, v);
    return v;
}

void Graph::accumulate_grads(TensorMap& grads, Real scale) const {
    for (const auto& [name, leaf] : leaves_) {
        if (!leaf.node() || leaf.node()->grad.empty()) continue;
        auto it = grads.find(name);
        if (it == grads.end()) it = grads.emplace(name, Tensor(leaf.shape())).first;
        Tensor& dst = it->second;
        const Tensor& g = leaf.node()->grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * g[i];
    }
}

} // namespace sthdr
