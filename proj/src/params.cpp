#include "polynet/params.hpp"

#include <cmath>
#include <stdexcept>

namespace polynet {

std::string_view to_string(ParamGroup g)
{
    switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Decoder: return "decoder";
    case ParamGroup::PolyNet: return "polynet";
    }
    return "?";
}

ParamGroup parse_group(std::string_view name)
{
    if (name == "encoder") return ParamGroup::Encoder;
    if (name == "decoder") return ParamGroup::Decoder;
    if (name == "polynet") return ParamGroup::PolyNet;
    throw std::invalid_argument("unknown parameter group '" + std::string(name) + "'");
}

template <typename T>
ParamStore<T>::ParamStore(const std::vector<ParamSpec>& layout)
{
    for (const ParamSpec& s : layout) push(s.name, s.group, Tensor<T>(s.shape));
}

template <typename T>
void ParamStore<T>::push(std::string name, ParamGroup group, Tensor<T> value)
{
    if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    by_name_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), group, std::move(value)});
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const
{
    return by_name_.count(std::string(name)) != 0;
}

template <typename T>
std::size_t ParamStore<T>::index(std::string_view name) const
{
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
    return it->second;
}

template <typename T>
std::size_t ParamStore<T>::count(ParamGroup g) const
{
    std::size_t c = 0;
    for (const Entry& e : entries_) c += e.group == g ? 1 : 0;
    return c;
}

template <typename T>
std::size_t ParamStore<T>::num_scalars(GroupMask groups) const
{
    std::size_t c = 0;
    for (const Entry& e : entries_)
        if (groups[e.group]) c += e.value.values.size();
    return c;
}

template <typename T>
void ParamStore<T>::copy_groups_from(const ParamStore& other, GroupMask groups)
{
    for (Entry& e : entries_) {
        if (!groups[e.group]) continue;
        if (!other.contains(e.name)) throw std::invalid_argument("source lacks parameter '" + e.name + "'");
        const Tensor<T>& src = other[e.name];
        if (!(src.shape == e.value.shape))
            throw ShapeError("parameter '" + e.name + "' has shape " + to_string(src.shape) + ", expected " +
                             to_string(e.value.shape));
        e.value.values = src.values;
    }
}

template <typename T>
bool ParamStore<T>::operator==(const ParamStore& other) const
{
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const Entry& a = entries_[i];
        const Entry& b = other.entries_[i];
        if (a.name != b.name || a.group != b.group || !(a.value.shape == b.value.shape) ||
            a.value.values != b.value.values)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

template <typename T>
Gradients<T>::Gradients(const ParamStore<T>& params, GroupMask mask) : mask_(mask)
{
    buffers_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        if (mask[params.entry(i).group]) buffers_[i].assign(params.entry(i).value.values.size(), T(0));
}

template <typename T>
void Gradients<T>::zero()
{
    for (auto& b : buffers_) std::fill(b.begin(), b.end(), T(0));
}

template <typename T>
void Gradients<T>::add(const Gradients& other)
{
    if (other.buffers_.size() != buffers_.size()) throw std::invalid_argument("Gradients::add: layout mismatch");
    for (std::size_t i = 0; i < buffers_.size(); ++i) {
        if (buffers_[i].size() != other.buffers_[i].size())
            throw std::invalid_argument("Gradients::add: layout mismatch");
        for (std::size_t k = 0; k < buffers_[i].size(); ++k) buffers_[i][k] += other.buffers_[i][k];
    }
}

template <typename T>
void Gradients<T>::scale(T s)
{
    for (auto& b : buffers_)
        for (T& x : b) x *= s;
}

template <typename T>
double Gradients<T>::norm() const
{
    double acc = 0;
    for (const auto& b : buffers_)
        for (T x : b) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

template <typename T>
double Gradients<T>::group_norm(const ParamStore<T>& params, ParamGroup g) const
{
    double acc = 0;
    for (std::size_t i = 0; i < buffers_.size(); ++i)
        if (params.entry(i).group == g)
            for (T x : buffers_[i]) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

template <typename T>
bool Gradients<T>::all_finite() const
{
    for (const auto& b : buffers_)
        for (T x : b)
            if (!std::isfinite(x)) return false;
    return true;
}

// ---------------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(const ParamStore<T>& params, AdamConfig cfg, GroupMask groups) : cfg_(cfg), groups_(groups)
{
    if (!(cfg.learning_rate >= 0)) throw std::invalid_argument("Adam: learning rate must be non-negative");
    m.resize(params.size());
    v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        if (groups[params.entry(i).group]) {
            m[i].assign(params.entry(i).value.values.size(), T(0));
            v[i].assign(params.entry(i).value.values.size(), T(0));
        }
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params, const Gradients<T>& grads)
{
    if (grads.size() != params.size() || m.size() != params.size())
        throw std::invalid_argument("Adam::step: layout mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(cfg_.learning_rate / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!groups_[params.entry(i).group]) continue;
        auto g = grads[i];
        if (g.empty()) continue;
        auto& w = params.entry(i).value.values;
        auto& mi = m[i];
        auto& vi = v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            mi[k] = b1 * mi[k] + (T(1) - b1) * g[k];
            vi[k] = b2 * vi[k] + (T(1) - b2) * g[k] * g[k];
            w[k] -= step * mi[k] / (std::sqrt(vi[k] * inv_bc2) + eps);
        }
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace polynet
