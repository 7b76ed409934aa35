#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace fscplan {

// Container behind the policy and surrogate checkpoint files: a kind tag, a
// small integer header, and named float32 tensors (little-endian on disk).
struct NamedTensorFile {
  std::string kind;
  std::map<std::string, std::uint32_t> header;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> tensors;

  const Eigen::MatrixXf& tensor(const std::string& name) const;
  std::uint32_t header_at(const std::string& key) const;
};

void save_named_tensors(const NamedTensorFile& file, const std::string& path);
NamedTensorFile load_named_tensors(const std::string& path);

}  // namespace fscplan
