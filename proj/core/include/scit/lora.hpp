#pragma once

#include <string>
#include <vector>

#include "scit/model.hpp"
#include "scit/train.hpp"

namespace scit {

// A ~ seeded normal (std 0.02), B = 0, so a fresh adapter is an exact
// identity on the base model's outputs.
template <class S>
Adapter<S> init_adapter(const ModelParams<S>& base, const AdapterConfig& cfg,
                        const std::string& task_id, uint64_t seed);

// W + (alpha / rank) * B * A, all matrices row-major. A is [rank, in],
// B is [out, rank], W is [out, in].
template <class S>
std::vector<S> effective_weight(const std::vector<S>& w, int out_dim, int in_dim,
                                const std::vector<S>& a, const std::vector<S>& b, S alpha, int rank);

// Trains only the adapter tensors against the frozen base. The base is taken
// by const reference and is bit-unchanged afterwards.
template <class S>
TrainStats train_adapter(const ModelParams<S>& base, Adapter<S>& adapter,
                         const std::vector<EncodedExample>& data, const AdapterConfig& acfg,
                         const TrainConfig& tcfg);

// Folds the adapter into a standalone model. Verifies the base hash.
ModelParamsF merge(const ModelParamsF& base, const AdapterF& adapter);

// Throws HashMismatchError unless the adapter was created from this base.
void verify_adapter(const ModelParamsF& base, const AdapterF& adapter);
void verify_adapter(const Sha256Digest& base_hash, const AdapterF& adapter);

std::vector<uint8_t> serialize_adapter(const AdapterF& adapter);
AdapterF deserialize_adapter(const std::vector<uint8_t>& bytes);
void save_adapter(const std::string& path, const AdapterF& adapter);
AdapterF load_adapter(const std::string& path);

}  // namespace scit
