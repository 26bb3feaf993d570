#include "himnet/metaparams.hpp"

#include <cmath>

#include "himnet/embeddings.hpp"
#include "himnet/errors.hpp"

namespace himnet {

MetaParamPool init_pool(long k, long s, Rng& rng) {
    if (k < 1 || s < 1) throw ConfigError("init_pool: k and s must be positive");
    MetaParamPool pool;
    pool.k = k;
    pool.s = s;
    pool.p = init_uniform_param({k, s}, 1.0 / std::sqrt(static_cast<double>(k)), rng);
    return pool;
}

Tensor generate(const MetaParamPool& pool, const Tensor& query) {
    if (query.dim(query.ndim() - 1) != pool.k)
        throw ShapeError("generate: query width " +
                         std::to_string(query.dim(query.ndim() - 1)) +
                         " does not match pool candidate count " + std::to_string(pool.k));
    return matmul(query, pool.p);
}

Tensor generate_temporal(const MetaParamPool& pool_t, const Tensor& e_t) {
    if (e_t.ndim() != 2) throw ShapeError("generate_temporal: query must be [B x d_t]");
    return generate(pool_t, e_t);
}

Tensor generate_spatial(const MetaParamPool& pool_s, const Tensor& e_s) {
    if (e_s.ndim() != 2) throw ShapeError("generate_spatial: query must be [N x d_s]");
    return generate(pool_s, e_s);
}

Tensor generate_st_mixed(const MetaParamPool& pool_st, const Tensor& e_st) {
    if (e_st.ndim() != 3) throw ShapeError("generate_st_mixed: query must be [B x N x d_st]");
    return generate(pool_st, e_st);
}

Tensor encode_st(const Tensor& h, const Tensor& w_e, const Tensor& b_e) {
    if (w_e.ndim() != 2 || b_e.ndim() != 1 || w_e.dim(1) != b_e.dim(0))
        throw ShapeError("encode_st: projection shapes disagree");
    return add_row(matmul(h, w_e), b_e);
}

Tensor adaptive_graph_static(const Tensor& e_s) {
    if (e_s.ndim() != 2) throw ShapeError("adaptive_graph_static: embedding must be [N x d]");
    return softmax_last(relu(gram(e_s)));
}

Tensor adaptive_graph_dynamic(const Tensor& e_st) {
    if (e_st.ndim() != 3)
        throw ShapeError("adaptive_graph_dynamic: embedding must be [B x N x d]");
    return softmax_last(relu(gram(e_st)));
}

}  // namespace himnet
