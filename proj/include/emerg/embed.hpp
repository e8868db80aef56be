#pragma once

#include <span>
#include <string>

#include "emerg/autodiff.hpp"
#include "emerg/data.hpp"
#include "emerg/params.hpp"

namespace emerg::embed {

using ad::Var;

// Table for feature m: [vocab, N_d] for categorical kinds, [1, N_d] for
// continuous ones.
std::string table_name(const data::FeatureSchema& schema, std::size_t m);
void embed_init(ad::ParamStore& store, const data::FeatureSchema& schema, ad::Rng& rng);

// Fresh item ID embedding, drawn with the same initializer as the tables.
Tensor fresh_id_embedding(std::size_t dim, ad::Rng& rng);

// One feature value -> [N_d]. Throws ContractError on out-of-vocabulary ids
// or an empty multi-valued set.
Var embed_feature(const ad::Binding& params, const data::FeatureSchema& schema, std::size_t m,
                  const data::FeatureValue& value);

// Rows in schema order -> [N', N_d]. `id_override` (if defined) replaces the
// item ID row.
Var embed_instance(const ad::Binding& params, const data::FeatureSchema& schema, const data::RawInteraction& row,
                   const Var& id_override = {});

// Batched over records: [B, N', N_d].
Var embed_batch(const ad::Binding& params, const data::InteractionTable& table, std::span<const std::size_t> records,
                const Var& id_override = {});

// The N_v item-feature rows of one record: [N_v, N_d].
Var item_rows(const ad::Binding& params, const data::FeatureSchema& schema, const data::RawInteraction& row,
              const Var& id_override = {});

}  // namespace emerg::embed
