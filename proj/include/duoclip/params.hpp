// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "duoclip/error.hpp"

namespace duoclip {

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;  // in elements, into the flat buffer
    std::size_t size = 0;
    bool decay = false;  // receives decoupled weight decay

    bool operator==(const TensorInfo&) const = default;
};

/// Named tensors packed into one contiguous buffer. Gradients and optimizer
/// moments reuse the same layout as plain vectors of size().
template <class T>
class ParamStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, bool decay) {
        if (index_.count(name)) throw UsageError("duplicate tensor name: " + name);
        TensorInfo info;
        info.name = std::move(name);
        info.shape = std::move(shape);
        info.size = std::accumulate(info.shape.begin(), info.shape.end(), std::size_t{1},
                                    std::multiplies<>());
        info.offset = data_.size();
        info.decay = decay;
        data_.resize(data_.size() + info.size, T(0));
        index_.emplace(info.name, infos_.size());
        infos_.push_back(std::move(info));
        return infos_.size() - 1;
    }

    const std::vector<TensorInfo>& tensors() const { return infos_; }
    const TensorInfo& info(std::size_t i) const { return infos_[i]; }

    std::optional<std::size_t> find(std::string_view name) const {
        const auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t index(std::string_view name) const {
        const auto i = find(name);
        if (!i) throw UsageError("no tensor named " + std::string(name));
        return *i;
    }

    std::span<T> view(std::size_t i) { return {data_.data() + infos_[i].offset, infos_[i].size}; }
    std::span<const T> view(std::size_t i) const {
        return {data_.data() + infos_[i].offset, infos_[i].size};
    }
    std::span<T> operator[](std::string_view name) { return view(index(name)); }
    std::span<const T> operator[](std::string_view name) const { return view(index(name)); }

    /// Slice of an arbitrary same-layout buffer (gradients, moments).
    template <class U>
    std::span<U> slice(std::span<U> buffer, std::size_t i) const {
        return buffer.subspan(infos_[i].offset, infos_[i].size);
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }
    std::size_t size() const { return data_.size(); }

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& t : infos_) out.add(t.name, t.shape, t.decay);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::vector<TensorInfo> infos_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<T> data_;
};

}  // namespace duoclip
