#pragma once

#include <string>

#include "fscplan/dataset.hpp"
#include "fscplan/model.hpp"

namespace fscplan {

// All formats are line-oriented text; '#' starts a comment. See README for
// the grammar. Loaders validate before returning; savers print doubles with
// enough digits that parse(save(x)) == x bit-exactly.

enum class ModelKind { kPomdp, kHmPomdp };

// Inspects the leading keyword without parsing the whole file.
ModelKind peek_model_kind(const std::string& path);

Pomdp load_pomdp(const std::string& path);
void save_pomdp(const Pomdp& model, const std::string& path);

HmPomdp load_hm_pomdp(const std::string& path);
void save_hm_pomdp(const HmPomdp& family, const std::string& path);

// Loads either kind; a plain POMDP becomes a singleton family.
HmPomdp load_family_or_singleton(const std::string& path);

Fsc load_fsc(const std::string& path);
void save_fsc(const Fsc& fsc, const std::string& path);

TrajectoryDataset load_dataset(const std::string& path);
void save_dataset(const TrajectoryDataset& data, const std::string& path);

}  // namespace fscplan
