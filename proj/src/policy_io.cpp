#include "fscplan/policy_io.hpp"

#include "fscplan/checkpoint.hpp"

namespace fscplan {

void save_policy(const RecurrentPolicy& policy, const std::string& path) {
  NamedTensorFile file;
  file.kind = "policy";
  file.header["num_observations"] =
      static_cast<std::uint32_t>(policy.num_observations());
  file.header["num_actions"] =
      static_cast<std::uint32_t>(policy.num_actions());
  file.header["hidden_size"] = RecurrentPolicy::kHiddenSize;
  file.header["encoder_size"] = RecurrentPolicy::kEncoderSize;
  for (std::size_t i = 0; i < policy.slices().size(); ++i)
    file.tensors.emplace_back(policy.slices()[i].name,
                              policy.slice(static_cast<int>(i)).cast<float>());
  save_named_tensors(file, path);
}

RecurrentPolicy load_policy(const std::string& path) {
  NamedTensorFile file = load_named_tensors(path);
  if (file.kind != "policy")
    throw Error("'" + path + "' is not a policy checkpoint");
  if (file.header_at("hidden_size") != RecurrentPolicy::kHiddenSize)
    throw Error("unsupported hidden size in '" + path + "'");
  RecurrentPolicy policy(
      static_cast<int>(file.header_at("num_observations")),
      static_cast<int>(file.header_at("num_actions")));
  for (std::size_t i = 0; i < policy.slices().size(); ++i) {
    const auto& slice = policy.slices()[i];
    const Eigen::MatrixXf& t = file.tensor(slice.name);
    if (t.rows() != slice.rows || t.cols() != slice.cols)
      throw Error("tensor '" + slice.name + "' has the wrong shape in '" +
                  path + "'");
    policy.slice(static_cast<int>(i)) = t.cast<double>();
  }
  return policy;
}

}  // namespace fscplan
