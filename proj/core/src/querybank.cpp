#include "anchorseg/querybank.hpp"

#include "anchorseg/init.hpp"
#include "anchorseg/ops.hpp"

namespace anchorseg::querybank {
namespace {

// Mean of the embedding rows selected by ids, as [1, n].
template <typename T>
Var<T> mean_embedding(Var<T> table, std::span<const std::uint16_t> ids) {
  const auto& tv = table.value();
  const std::size_t rows = tv.dim(0), n = tv.dim(1);
  std::vector<std::size_t> idx;
  for (auto id : ids) {
    if (id >= rows) {
      throw ContractError("query symbol " + std::to_string(id) + " outside vocabulary of " + std::to_string(rows));
    }
    idx.push_back(id);
  }
  Tensor<T> out(Shape{1, n});
  const T inv = T(1) / static_cast<T>(idx.size());
  for (auto r : idx)
    for (std::size_t j = 0; j < n; ++j) out[j] += tv[r * n + j] * inv;
  const auto tid = table.id;
  return table.tape->record(std::move(out), {tid}, [tid, idx, n, inv](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gt = tape.grad_buffer(tid);
    for (auto r : idx)
      for (std::size_t j = 0; j < n; ++j) gt[r * n + j] += g[j] * inv;
  });
}

}  // namespace

template <typename T>
ReasonerParams<T> ReasonerParams<T>::create(ParameterStore<T>& store, const ReasonerDims& dims, std::mt19937_64& rng,
                                            const std::string& prefix) {
  if (dims.anchors == 0) throw ConfigError("reasoner needs at least one anchor head");
  const std::size_t dl = dims.d_lm;
  ReasonerParams p;
  p.dims = dims;
  p.embed = &store.add(prefix + ".embed", normal_tensor<T>({dims.vocab, dl}, 1.0, rng));
  p.init_w = &store.add(prefix + ".init_w", fan_in_tensor<T>({dl, dl}, dl, rng));
  p.init_b = &store.add(prefix + ".init_b", Tensor<T>({dl}));
  for (std::size_t k = 0; k < dims.contextual; ++k) {
    const auto tag = prefix + ".step" + std::to_string(k + 1);
    p.step_w.push_back(&store.add(tag + "_w", fan_in_tensor<T>({2 * dl, dl}, 2 * dl, rng)));
    p.step_b.push_back(&store.add(tag + "_b", Tensor<T>({dl})));
  }
  for (std::size_t t = 0; t < dims.anchors; ++t) {
    const auto tag = prefix + ".anchor" + std::to_string(t);
    p.anchor_w.push_back(&store.add(tag + "_w", fan_in_tensor<T>({2 * dl, dl}, 2 * dl, rng)));
    p.anchor_b.push_back(&store.add(tag + "_b", Tensor<T>({dl})));
  }
  p.phi_w1 = &store.add(prefix + ".phi_w1", fan_in_tensor<T>({dl, dl}, dl, rng));
  p.phi_b1 = &store.add(prefix + ".phi_b1", Tensor<T>({dl}));
  p.phi_w2 = &store.add(prefix + ".phi_w2", fan_in_tensor<T>({dl, dims.d}, dl, rng));
  p.phi_b2 = &store.add(prefix + ".phi_b2", Tensor<T>({dims.d}));
  return p;
}

template <typename T>
PositionalTable<T> PositionalTable<T>::create(ParameterStore<T>& store, std::size_t rows, std::size_t d,
                                              const std::string& name) {
  return {&store.add(name, Tensor<T>({rows, d}))};
}

template <typename T>
HiddenStates<T> generate_query_bank(Var<T> image_tokens, std::span<const std::uint16_t> symbols,
                                    const ReasonerParams<T>& params) {
  if (symbols.empty()) throw ContractError("generate_query_bank: empty query symbol sequence");
  const auto& tv = image_tokens.value();
  if (tv.rank() != 2 || tv.dim(0) == 0 || tv.dim(1) != params.dims.d_lm) {
    throw DimensionError("generate_query_bank: image tokens " + shape_str(tv.shape()) + " for d_lm " +
                         std::to_string(params.dims.d_lm));
  }
  auto& tape = *image_tokens.tape;
  HiddenStates<T> out;
  out.pooled = ops::mean_rows(image_tokens);
  auto emb = mean_embedding(tape.param(*params.embed), symbols);
  out.initial = ops::linear(emb, tape.param(*params.init_w), tape.param(*params.init_b));
  Var<T> h = out.initial;
  for (std::size_t k = 0; k < params.step_w.size(); ++k) {
    auto in = ops::concat_cols(h, out.pooled);
    h = ops::tanh(ops::linear(in, tape.param(*params.step_w[k]), tape.param(*params.step_b[k])));
    out.contextual.push_back(h);
  }
  auto last = ops::concat_cols(h, out.pooled);
  for (std::size_t t = 0; t < params.anchor_w.size(); ++t) {
    out.anchors.push_back(ops::linear(last, tape.param(*params.anchor_w[t]), tape.param(*params.anchor_b[t])));
  }
  return out;
}

template <typename T>
Var<T> project_phi(Var<T> hidden, const ReasonerParams<T>& params) {
  auto& tape = *hidden.tape;
  auto z = ops::relu(ops::linear(hidden, tape.param(*params.phi_w1), tape.param(*params.phi_b1)));
  return ops::linear(z, tape.param(*params.phi_w2), tape.param(*params.phi_b2));
}

template <typename T>
QueryBank<T> project_bank(const HiddenStates<T>& hidden, const ReasonerParams<T>& params) {
  QueryBank<T> bank;
  for (const auto& h : hidden.contextual) bank.contextual.push_back(project_phi(h, params));
  for (const auto& h : hidden.anchors) bank.anchors.push_back(project_phi(h, params));
  return bank;
}

template <typename T>
Var<T> add_positional(const QueryBank<T>& bank, Var<T> table, bool include_contextual) {
  const auto& tv = table.value();
  if (bank.anchors.empty()) throw ContractError("add_positional: query bank has no anchor");
  if (tv.rank() != 2 || tv.dim(0) != bank.size()) {
    throw ContractError("add_positional: table " + shape_str(tv.shape()) + " for bank of length " +
                        std::to_string(bank.size()));
  }
  std::vector<Var<T>> rows;
  std::size_t k = 0;
  for (const auto& q : bank.contextual) {
    if (include_contextual) rows.push_back(q);
    ++k;
  }
  rows.insert(rows.end(), bank.anchors.begin(), bank.anchors.end());
  auto queries = ops::concat_rows(rows);
  auto pos = include_contextual ? table : ops::slice_rows(table, k, tv.dim(0));
  return ops::add(queries, pos);
}

#define ANCHORSEG_INSTANTIATE_QB(T)                                                                          \
  template struct ReasonerParams<T>;                                                                       \
  template struct PositionalTable<T>;                                                                      \
  template HiddenStates<T> generate_query_bank(Var<T>, std::span<const std::uint16_t>, const ReasonerParams<T>&); \
  template Var<T> project_phi(Var<T>, const ReasonerParams<T>&);                                           \
  template QueryBank<T> project_bank(const HiddenStates<T>&, const ReasonerParams<T>&);                    \
  template Var<T> add_positional(const QueryBank<T>&, Var<T>, bool);

ANCHORSEG_INSTANTIATE_QB(float)
ANCHORSEG_INSTANTIATE_QB(double)

}  // namespace anchorseg::querybank
