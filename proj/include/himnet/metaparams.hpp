#pragma once

#include "himnet/tensor.hpp"

namespace himnet {

// A pool of k candidate parameter sets, each flattened to size s. Queries
// produce context-specific parameters as weighted combinations of the rows.
struct MetaParamPool {
    Tensor p;  // [k x s]
    long k = 0;
    long s = 0;
};

// Entries drawn uniformly from [-1/sqrt(k), 1/sqrt(k)] so the query product
// lands at standard layer-init scale.
MetaParamPool init_pool(long k, long s, Rng& rng);

// vartheta = Q . P over the trailing query dim; linear in both arguments.
// query [... x k] -> [... x s].
Tensor generate(const MetaParamPool& pool, const Tensor& query);

// The three instantiations: per-sample, per-node, per-(sample, node).
Tensor generate_temporal(const MetaParamPool& pool_t, const Tensor& e_t);   // [B x s]
Tensor generate_spatial(const MetaParamPool& pool_s, const Tensor& e_s);    // [N x s]
Tensor generate_st_mixed(const MetaParamPool& pool_st, const Tensor& e_st);  // [B x N x s]

// E_st = H . W_E + b_E applied per (sample, node).
Tensor encode_st(const Tensor& h, const Tensor& w_e, const Tensor& b_e);

// Row-softmax(ReLU(E . E^T)); a zero row softmaxes to the uniform row.
Tensor adaptive_graph_static(const Tensor& e_s);     // [N x d] -> [N x N]
Tensor adaptive_graph_dynamic(const Tensor& e_st);   // [B x N x d] -> [B x N x N]

}  // namespace himnet
