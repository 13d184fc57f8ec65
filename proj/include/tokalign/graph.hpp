#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tokalign/params.hpp"
#include "tokalign/tape.hpp"

namespace tokalign {

// One forward/backward pass: binds ParameterStore tensors into tape leaves and
// accumulates leaf gradients back into the store after backward().
struct GraphContext {
    Tape tape;
    ParameterStore* params;

    explicit GraphContext(ParameterStore& p) : params(&p) {}

    // Leafs the named tensor once per pass; repeated requests share the node.
    int param(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        int id = tape.leaf(params->value(name));
        bound_.emplace_back(name, id);
        cache_.emplace(name, id);
        return id;
    }

    void backward_and_accumulate(int loss_node) {
        tape.backward(loss_node);
        for (const auto& [name, id] : bound_) {
            const Matrix& g = tape.grad(id);
            Matrix& dst = params->grad(name);
            for (size_t i = 0; i < g.size(); ++i) dst.v[i] += g.v[i];
        }
    }

private:
    std::vector<std::pair<std::string, int>> bound_;
    std::unordered_map<std::string, int> cache_;
};

}  // namespace tokalign
