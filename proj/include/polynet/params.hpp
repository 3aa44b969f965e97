#pragma once

#include "polynet/tape.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace polynet {

enum class ParamGroup : std::uint8_t { Encoder = 0, Decoder = 1, PolyNet = 2 };
inline constexpr int kNumGroups = 3;

std::string_view to_string(ParamGroup g);
ParamGroup parse_group(std::string_view name);

/// Which groups receive gradients / updates.
struct GroupMask {
    std::array<bool, kNumGroups> on{true, true, true};

    static GroupMask all() { return {}; }
    static GroupMask none() { return {{false, false, false}}; }
    static GroupMask only(ParamGroup g)
    {
        GroupMask m = none();
        m.on[static_cast<int>(g)] = true;
        return m;
    }
    [[nodiscard]] bool operator[](ParamGroup g) const { return on[static_cast<int>(g)]; }
};

struct ParamSpec {
    std::string name;
    ParamGroup group;
    Shape shape;
};

/// Named parameters in a fixed order. The order is the model's layout, so
/// index-based access is stable for a given ModelConfig.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        ParamGroup group;
        Tensor<T> value;
    };

    ParamStore() = default;
    explicit ParamStore(const std::vector<ParamSpec>& layout);

    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] Entry& entry(std::size_t i) { return entries_[i]; }
    [[nodiscard]] const Entry& entry(std::size_t i) const { return entries_[i]; }
    [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] std::size_t index(std::string_view name) const;
    [[nodiscard]] Tensor<T>& operator[](std::string_view name) { return entries_[index(name)].value; }
    [[nodiscard]] const Tensor<T>& operator[](std::string_view name) const { return entries_[index(name)].value; }

    [[nodiscard]] std::size_t count(ParamGroup g) const;
    /// Total scalar count, optionally restricted to some groups.
    [[nodiscard]] std::size_t num_scalars(GroupMask groups = GroupMask::all()) const;

    /// Copies every parameter of `groups` from `other` (names and shapes must match).
    void copy_groups_from(const ParamStore& other, GroupMask groups);

    template <typename U>
    [[nodiscard]] ParamStore<U> cast() const
    {
        ParamStore<U> out;
        for (const Entry& e : entries_) {
            Tensor<U> t(e.value.shape);
            for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = static_cast<U>(e.value.values[i]);
            out.push(e.name, e.group, std::move(t));
        }
        return out;
    }

    void push(std::string name, ParamGroup group, Tensor<T> value);

    bool operator==(const ParamStore& other) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

/// Gradient accumulators parallel to a ParamStore. Groups outside `mask`
/// have no buffer, so nothing can ever be accumulated into them.
template <typename T>
class Gradients {
public:
    Gradients() = default;
    Gradients(const ParamStore<T>& params, GroupMask mask);

    [[nodiscard]] T* buffer(std::size_t i) { return buffers_[i].empty() ? nullptr : buffers_[i].data(); }
    [[nodiscard]] std::span<const T> operator[](std::size_t i) const { return buffers_[i]; }
    [[nodiscard]] std::size_t size() const { return buffers_.size(); }
    [[nodiscard]] GroupMask mask() const { return mask_; }

    void zero();
    void add(const Gradients& other);
    void scale(T s);
    [[nodiscard]] double norm() const;
    [[nodiscard]] double group_norm(const ParamStore<T>& params, ParamGroup g) const;
    [[nodiscard]] bool all_finite() const;

private:
    std::vector<std::vector<T>> buffers_;
    GroupMask mask_ = GroupMask::none();
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive moment estimation without weight decay.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(const ParamStore<T>& params, AdamConfig cfg, GroupMask groups);

    void step(ParamStore<T>& params, const Gradients<T>& grads);

    [[nodiscard]] const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
    [[nodiscard]] std::int64_t steps() const { return t_; }
    [[nodiscard]] GroupMask groups() const { return groups_; }

    // Exposed for checkpointing.
    std::vector<std::vector<T>> m, v;
    void set_steps(std::int64_t t) { t_ = t; }

private:
    AdamConfig cfg_;
    GroupMask groups_ = GroupMask::all();
    std::int64_t t_ = 0;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace polynet
