#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hiadv/common.hpp"
#include "hiadv/tensor.hpp"

namespace hiadv {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

class ParameterGroup {
public:
    void add(std::string name, Tensor t) {
        for (const auto& p : params_)
            if (p.name == name) throw ValueError("parameter group: duplicate name " + name);
        params_.push_back({std::move(name), std::move(t)});
    }

    void append(const ParameterGroup& other) {
        for (const auto& p : other.params_) add(p.name, p.tensor);
    }

    const std::vector<NamedParam>& params() const { return params_; }
    std::size_t size() const { return params_.size(); }

    const Tensor* find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return &p.tensor;
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    // Deep copy of current values, for best-checkpoint tracking and bitwise
    // comparison in tests.
    std::vector<std::vector<double>> snapshot() const {
        std::vector<std::vector<double>> s;
        s.reserve(params_.size());
        for (const auto& p : params_) s.push_back(p.tensor.values());
        return s;
    }

    void restore(const std::vector<std::vector<double>>& s) {
        if (s.size() != params_.size())
            throw ValueError("parameter group: snapshot size mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i].size() != params_[i].tensor.values().size())
                throw ValueError("parameter group: snapshot shape mismatch at " + params_[i].name);
            params_[i].tensor.values() = s[i];
        }
    }

private:
    std::vector<NamedParam> params_;
};

// Adam with bias correction. Moment buffers are allocated per parameter at
// construction and keep the parameter's shape.
class Adam {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    explicit Adam(ParameterGroup group) : Adam(std::move(group), Options()) {}

    Adam(ParameterGroup group, const Options& opt)
        : group_(std::move(group)), opt_(opt) {
        m_.resize(group_.size());
        v_.resize(group_.size());
        for (std::size_t i = 0; i < group_.size(); ++i) {
            const std::size_t n = group_.params()[i].tensor.values().size();
            m_[i].assign(n, 0.0);
            v_[i].assign(n, 0.0);
        }
    }

    void step() {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < group_.size(); ++i) {
            const auto& p = group_.params()[i];
            if (!p.tensor.has_grad())
                throw ValueError("optimizer step: parameter " + p.name + " has no gradient");
            Tensor t = p.tensor; // handle; shares storage
            auto& values = t.values();
            const auto& g = t.grad();
            for (std::size_t j = 0; j < values.size(); ++j) {
                m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g[j];
                v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g[j] * g[j];
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                values[j] -= opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.epsilon);
            }
        }
    }

    void zero_grad() { group_.zero_grad(); }

    long step_count() const { return step_count_; }
    const ParameterGroup& group() const { return group_; }
    ParameterGroup& group() { return group_; }

private:
    ParameterGroup group_;
    Options opt_;
    long step_count_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ---- checkpoint serialization ----
// <stem>.json holds the manifest (name -> shape, byte offset into the blob);
// <stem>.bin is the little-endian flat binary of 64-bit floats.

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written little-endian");

inline void save_params(const std::string& stem,
                        const std::vector<const ParameterGroup*>& groups) {
    nlohmann::json manifest;
    manifest["format"] = "hiadv-params-v1";
    manifest["entries"] = nlohmann::json::array();
    std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("checkpoint: cannot write " + stem + ".bin");
    std::uint64_t offset = 0;
    for (const auto* g : groups) {
        for (const auto& p : g->params()) {
            manifest["entries"].push_back({{"name", p.name},
                                           {"shape", {p.tensor.rows(), p.tensor.cols()}},
                                           {"offset", offset}});
            const auto& v = p.tensor.values();
            bin.write(reinterpret_cast<const char*>(v.data()),
                      static_cast<std::streamsize>(v.size() * sizeof(double)));
            offset += v.size() * sizeof(double);
        }
    }
    bin.close();
    std::ofstream js(stem + ".json", std::ios::trunc);
    if (!js) throw DataError("checkpoint: cannot write " + stem + ".json");
    js << manifest.dump(2) << "\n";
}

class CheckpointReader {
public:
    explicit CheckpointReader(const std::string& stem) {
        std::ifstream js(stem + ".json");
        if (!js) throw DataError("checkpoint: cannot open " + stem + ".json");
        nlohmann::json manifest = nlohmann::json::parse(js, nullptr, true);
        if (manifest.value("format", "") != "hiadv-params-v1")
            throw DataError("checkpoint: unknown manifest format in " + stem + ".json");
        std::ifstream bin(stem + ".bin", std::ios::binary);
        if (!bin) throw DataError("checkpoint: cannot open " + stem + ".bin");
        for (const auto& e : manifest.at("entries")) {
            Entry entry;
            entry.shape = {e.at("shape").at(0).get<int>(), e.at("shape").at(1).get<int>()};
            const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
            entry.values.resize(static_cast<std::size_t>(entry.shape.size()));
            bin.seekg(static_cast<std::streamoff>(offset));
            bin.read(reinterpret_cast<char*>(entry.values.data()),
                     static_cast<std::streamsize>(entry.values.size() * sizeof(double)));
            if (!bin) throw DataError("checkpoint: truncated blob " + stem + ".bin");
            entries_[e.at("name").get<std::string>()] = std::move(entry);
        }
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    // Loads matching entries into the group's tensors.
    void load_into(ParameterGroup& group, bool allow_missing = false) const {
        for (const auto& p : group.params()) {
            auto it = entries_.find(p.name);
            if (it == entries_.end()) {
                if (allow_missing) continue;
                throw DataError("checkpoint: missing parameter " + p.name);
            }
            if (!(it->second.shape == p.tensor.shape()))
                throw DataError("checkpoint: shape mismatch for " + p.name + ": file " +
                                it->second.shape.str() + " vs model " + p.tensor.shape().str());
            Tensor t = p.tensor; // handle; shares storage
            t.values() = it->second.values;
        }
    }

private:
    struct Entry {
        Shape shape;
        std::vector<double> values;
    };
    std::map<std::string, Entry> entries_;
};

} // namespace hiadv
