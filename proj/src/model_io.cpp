#include "fscplan/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace fscplan {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Whitespace-separated tokens with line tracking; '#' comments run to EOL.
class TokenReader {
 public:
  TokenReader(std::istream& in, std::string file)
      : in_(in), file_(std::move(file)) {}

  int line() const { return line_; }
  const std::string& file() const { return file_; }

  bool next(std::string& tok) {
    tok.clear();
    int c;
    while ((c = in_.get()) != EOF) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = in_.get();
      }
      if (c == '\n') {
        if (!tok.empty()) {
          ++pending_newlines_;
          return true;
        }
        ++line_;
        continue;
      }
      if (c == EOF) break;
      if (std::isspace(c)) {
        if (!tok.empty()) return true;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return !tok.empty();
  }

  std::string expect(const std::string& what) {
    flush_newlines();
    std::string tok;
    if (!next(tok)) fail("expected " + what + ", got end of file");
    return tok;
  }

  long expect_int(const std::string& what) {
    std::string tok = expect(what);
    try {
      std::size_t pos = 0;
      long v = std::stol(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      fail("expected integer " + what + ", got '" + tok + "'");
    }
    return 0;
  }

  double expect_double(const std::string& what) {
    std::string tok = expect(what);
    try {
      std::size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      fail("expected number " + what + ", got '" + tok + "'");
    }
    return 0.0;
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError(file_, line_, msg);
  }

 private:
  // Newlines seen while scanning a token are credited after it is consumed
  // so errors report the line the offending token started on.
  void flush_newlines() {
    line_ += pending_newlines_;
    pending_newlines_ = 0;
  }

  std::istream& in_;
  std::string file_;
  int line_ = 1;
  int pending_newlines_ = 0;
};

bool is_keyword(const std::string& tok) {
  return tok == "objective" || tok == "states" || tok == "actions" ||
         tok == "observations" || tok == "initial" || tok == "targets" ||
         tok == "obs" || tok == "legal" || tok == "transitions" ||
         tok == "rewards" || tok == "member" || tok == "end" ||
         tok == "nodes" || tok == "delta" || tok == "eta" || tok == "sigma" ||
         tok == "sequences" || tok == "members" || tok == "name";
}

struct Header {
  std::string name;
  std::optional<Objective> objective;
  int num_states = -1, num_actions = -1, num_observations = -1;
  int initial = 0;
  std::vector<int> targets;
};

// Parses the body of one POMDP given an already-read header and the token
// that opened the first section. Returns the token that ended the body.
std::string parse_pomdp_body(TokenReader& r, const Header& h, Pomdp* model,
                             std::string section) {
  model->name = h.name;
  model->objective = *h.objective;
  model->num_states = h.num_states;
  model->num_actions = h.num_actions;
  model->num_observations = h.num_observations;
  model->initial_state = h.initial;
  model->obs_of.assign(h.num_states, 0);
  model->is_target.assign(h.num_states, 0);
  for (int g : h.targets) {
    if (g < 0 || g >= h.num_states) r.fail("target state out of range");
    model->is_target[g] = 1;
  }
  std::size_t rows =
      static_cast<std::size_t>(h.num_states) * h.num_actions;
  model->trans.assign(rows, {});
  model->reward.assign(rows, 0.0);

  bool have_obs = false;
  bool have_legal = false;
  while (true) {
    if (section == "obs") {
      for (int s = 0; s < h.num_states; ++s) {
        long z = r.expect_int("observation id");
        if (z < 0 || z >= h.num_observations)
          r.fail("observation id out of range for state " + std::to_string(s));
        model->obs_of[s] = static_cast<int>(z);
      }
      have_obs = true;
    } else if (section == "legal") {
      have_legal = true;
      model->legal.assign(h.num_states, {});
      std::string tok;
      while (true) {
        tok = r.expect("state id or section");
        if (is_keyword(tok)) break;
        long s = std::stol(tok);
        long a = r.expect_int("action id");
        if (s < 0 || s >= h.num_states) r.fail("legal state out of range");
        if (a < 0 || a >= h.num_actions) r.fail("legal action out of range");
        model->legal[s].push_back(static_cast<int>(a));
      }
      for (auto& acts : model->legal) std::sort(acts.begin(), acts.end());
      section = tok;
      continue;
    } else if (section == "transitions") {
      std::string tok;
      while (true) {
        tok = r.expect("transition row or section");
        if (is_keyword(tok)) break;
        long s = std::stol(tok);
        long a = r.expect_int("action id");
        long s2 = r.expect_int("successor id");
        double p = r.expect_double("probability");
        if (s < 0 || s >= h.num_states || s2 < 0 || s2 >= h.num_states)
          r.fail("transition state out of range");
        if (a < 0 || a >= h.num_actions)
          r.fail("transition action out of range");
        DiscreteDist& row = model->transition(static_cast<int>(s),
                                              static_cast<int>(a));
        row.ids.push_back(static_cast<int>(s2));
        row.probs.push_back(p);
      }
      section = tok;
      continue;
    } else if (section == "rewards") {
      std::string tok;
      while (true) {
        tok = r.expect("reward row or section");
        if (is_keyword(tok)) break;
        long s = std::stol(tok);
        long a = r.expect_int("action id");
        double v = r.expect_double("reward");
        if (s < 0 || s >= h.num_states) r.fail("reward state out of range");
        if (a < 0 || a >= h.num_actions) r.fail("reward action out of range");
        model->reward[static_cast<std::size_t>(s) * h.num_actions + a] = v;
      }
      section = tok;
      continue;
    } else {
      break;
    }
    section = r.expect("section");
  }

  if (!have_obs) r.fail("model is missing the 'obs' section");
  if (!have_legal) {
    model->legal.assign(h.num_states, {});
    for (int s = 0; s < h.num_states; ++s)
      for (int a = 0; a < h.num_actions; ++a) model->legal[s].push_back(a);
  }
  // Renormalize rows that are off by no more than the tolerance.
  for (int s = 0; s < h.num_states; ++s)
    for (int a : model->legal[s]) {
      DiscreteDist& row = model->transition(s, a);
      if (row.empty())
        r.fail("no transitions for legal row (s=" + std::to_string(s) +
               ",a=" + std::to_string(a) + ")");
      try {
        row.normalize("row (s=" + std::to_string(s) + ",a=" +
                      std::to_string(a) + ")");
      } catch (const ValidationError& e) {
        r.fail(e.what());
      }
    }
  return section;
}

Header parse_header(TokenReader& r, std::string* first_section) {
  Header h;
  std::string tok = r.expect("header field");
  while (true) {
    if (tok == "name") {
      h.name = r.expect("model name");
    } else if (tok == "objective") {
      h.objective = objective_from_string(r.expect("objective"));
    } else if (tok == "states") {
      h.num_states = static_cast<int>(r.expect_int("state count"));
    } else if (tok == "actions") {
      h.num_actions = static_cast<int>(r.expect_int("action count"));
    } else if (tok == "observations") {
      h.num_observations = static_cast<int>(r.expect_int("observation count"));
    } else if (tok == "initial") {
      h.initial = static_cast<int>(r.expect_int("initial state"));
    } else if (tok == "targets") {
      while (true) {
        tok = r.expect("target id or section");
        if (is_keyword(tok)) break;
        h.targets.push_back(static_cast<int>(std::stol(tok)));
      }
      continue;
    } else {
      break;
    }
    tok = r.expect("header field");
  }
  if (!h.objective) r.fail("header is missing 'objective'");
  if (h.num_states < 0) r.fail("header is missing 'states'");
  if (h.num_actions < 0) r.fail("header is missing 'actions'");
  if (h.num_observations < 0) r.fail("header is missing 'observations'");
  *first_section = tok;
  return h;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

void write_pomdp_sections(std::ostream& out, const Pomdp& m) {
  out << "objective " << to_string(m.objective) << "\n";
  out << "states " << m.num_states << "\n";
  out << "actions " << m.num_actions << "\n";
  out << "observations " << m.num_observations << "\n";
  out << "initial " << m.initial_state << "\n";
  out << "targets";
  for (int g : m.target_states()) out << " " << g;
  out << "\n";
  out << "obs";
  for (int z : m.obs_of) out << " " << z;
  out << "\n";
  bool all_legal = true;
  for (int s = 0; s < m.num_states && all_legal; ++s)
    all_legal = static_cast<int>(m.legal[s].size()) == m.num_actions;
  if (!all_legal) {
    out << "legal\n";
    for (int s = 0; s < m.num_states; ++s)
      for (int a : m.legal[s]) out << s << " " << a << "\n";
  }
  out << "transitions\n";
  for (int s = 0; s < m.num_states; ++s)
    for (int a : m.legal[s]) {
      const DiscreteDist& row = m.transition(s, a);
      for (int k = 0; k < row.size(); ++k)
        out << s << " " << a << " " << row.ids[k] << " "
            << format_double(row.probs[k]) << "\n";
    }
  bool any_reward = false;
  for (double v : m.reward) any_reward |= v != 0.0;
  if (any_reward) {
    out << "rewards\n";
    for (int s = 0; s < m.num_states; ++s)
      for (int a : m.legal[s]) {
        double v = m.reward_at(s, a);
        if (v != 0.0) out << s << " " << a << " " << format_double(v) << "\n";
      }
  }
}

}  // namespace

ModelKind peek_model_kind(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  TokenReader r(in, path);
  std::string kind = r.expect("model kind");
  if (kind == "pomdp") return ModelKind::kPomdp;
  if (kind == "hmpomdp") return ModelKind::kHmPomdp;
  r.fail("expected 'pomdp' or 'hmpomdp', got '" + kind + "'");
}

Pomdp load_pomdp(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  TokenReader r(in, path);
  std::string kind = r.expect("model kind");
  if (kind != "pomdp") r.fail("expected 'pomdp', got '" + kind + "'");
  std::string section;
  Header h = parse_header(r, &section);
  Pomdp model;
  section = parse_pomdp_body(r, h, &model, section);
  if (section != "end") r.fail("expected 'end', got '" + section + "'");
  try {
    validate(model);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return model;
}

void save_pomdp(const Pomdp& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "pomdp\n";
  if (!model.name.empty()) out << "name " << model.name << "\n";
  write_pomdp_sections(out, model);
  out << "end\n";
}

HmPomdp load_hm_pomdp(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  TokenReader r(in, path);
  std::string kind = r.expect("model kind");
  if (kind != "hmpomdp") r.fail("expected 'hmpomdp', got '" + kind + "'");
  std::string tok = r.expect("members");
  std::string name;
  if (tok == "name") {
    name = r.expect("family name");
    tok = r.expect("members");
  }
  if (tok != "members") r.fail("expected 'members', got '" + tok + "'");
  long count = r.expect_int("member count");
  if (count < 1) r.fail("family needs at least one member");

  std::string section;
  Header h = parse_header(r, &section);
  HmPomdp family;
  family.name = name;
  family.members.resize(1);
  section = parse_pomdp_body(r, h, &family.members[0], section);
  family.members[0].name = name.empty() ? "" : name + "[0]";

  // Remaining members are deltas: listed (s,a) rows replace member 0's.
  while (section == "member") {
    long idx = r.expect_int("member index");
    if (idx != static_cast<long>(family.members.size()))
      r.fail("member indices must be consecutive, expected " +
             std::to_string(family.members.size()));
    Pomdp m = family.members[0];
    m.name = name.empty() ? "" : name + "[" + std::to_string(idx) + "]";
    section = r.expect("section");
    while (section == "transitions" || section == "rewards") {
      bool trans = section == "transitions";
      std::vector<std::uint8_t> cleared(m.trans.size(), 0);
      while (true) {
        section = r.expect("row or section");
        if (is_keyword(section)) break;
        long s = std::stol(section);
        long a = r.expect_int("action id");
        if (s < 0 || s >= m.num_states || a < 0 || a >= m.num_actions)
          r.fail("delta row out of range");
        std::size_t idx_sa = static_cast<std::size_t>(s) * m.num_actions + a;
        if (trans) {
          long s2 = r.expect_int("successor id");
          double p = r.expect_double("probability");
          if (s2 < 0 || s2 >= m.num_states) r.fail("successor out of range");
          if (!cleared[idx_sa]) {
            m.trans[idx_sa] = {};
            cleared[idx_sa] = 1;
          }
          m.trans[idx_sa].ids.push_back(static_cast<int>(s2));
          m.trans[idx_sa].probs.push_back(p);
        } else {
          m.reward[idx_sa] = r.expect_double("reward");
        }
      }
      if (trans)
        for (std::size_t k = 0; k < m.trans.size(); ++k)
          if (cleared[k]) {
            try {
              m.trans[k].normalize("member " + std::to_string(idx) + " row");
            } catch (const ValidationError& e) {
              r.fail(e.what());
            }
          }
    }
    family.members.push_back(std::move(m));
  }
  if (section != "end") r.fail("expected 'end', got '" + section + "'");
  if (static_cast<long>(family.members.size()) != count)
    r.fail("header declares " + std::to_string(count) + " members, file has " +
           std::to_string(family.members.size()));
  try {
    validate(family);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return family;
}

void save_hm_pomdp(const HmPomdp& family, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "hmpomdp\n";
  if (!family.name.empty()) out << "name " << family.name << "\n";
  out << "members " << family.size() << "\n";
  write_pomdp_sections(out, family.members[0]);
  const Pomdp& base = family.members[0];
  for (int i = 1; i < family.size(); ++i) {
    const Pomdp& m = family.members[i];
    out << "member " << i << "\n";
    std::ostringstream trows, rrows;
    for (int s = 0; s < m.num_states; ++s)
      for (int a : m.legal[s]) {
        std::size_t idx = static_cast<std::size_t>(s) * m.num_actions + a;
        if (m.trans[idx].ids != base.trans[idx].ids ||
            m.trans[idx].probs != base.trans[idx].probs) {
          const DiscreteDist& row = m.trans[idx];
          for (int k = 0; k < row.size(); ++k)
            trows << s << " " << a << " " << row.ids[k] << " "
                  << format_double(row.probs[k]) << "\n";
        }
        if (m.reward[idx] != base.reward[idx])
          rrows << s << " " << a << " " << format_double(m.reward[idx]) << "\n";
      }
    if (!trows.str().empty()) out << "transitions\n" << trows.str();
    if (!rrows.str().empty()) out << "rewards\n" << rrows.str();
  }
  out << "end\n";
}

HmPomdp load_family_or_singleton(const std::string& path) {
  if (peek_model_kind(path) == ModelKind::kHmPomdp) return load_hm_pomdp(path);
  HmPomdp family;
  family.members.push_back(load_pomdp(path));
  family.name = family.members[0].name;
  return family;
}

Fsc load_fsc(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  TokenReader r(in, path);
  std::string kind = r.expect("fsc keyword");
  if (kind != "fsc") r.fail("expected 'fsc', got '" + kind + "'");
  Fsc fsc;
  std::string tok = r.expect("header field");
  while (true) {
    if (tok == "nodes")
      fsc.num_nodes = static_cast<int>(r.expect_int("node count"));
    else if (tok == "initial")
      fsc.initial_node = static_cast<int>(r.expect_int("initial node"));
    else if (tok == "observations")
      fsc.num_observations =
          static_cast<int>(r.expect_int("observation count"));
    else if (tok == "actions")
      fsc.num_actions = static_cast<int>(r.expect_int("action count"));
    else
      break;
    tok = r.expect("header field or section");
  }
  if (fsc.num_nodes <= 0 || fsc.num_observations <= 0 || fsc.num_actions <= 0)
    r.fail("fsc header incomplete");
  std::size_t rows =
      static_cast<std::size_t>(fsc.num_nodes) * fsc.num_observations;
  auto check_nz = [&](long n, long z) {
    if (n < 0 || n >= fsc.num_nodes) r.fail("node id out of range");
    if (z < 0 || z >= fsc.num_observations) r.fail("observation out of range");
  };
  while (tok == "delta" || tok == "eta" || tok == "sigma") {
    if (tok == "sigma") {
      if (!fsc.delta.empty()) r.fail("file mixes split and combined forms");
      fsc.sigma.resize(rows);
      while (true) {
        tok = r.expect("sigma row or 'end'");
        if (is_keyword(tok)) break;
        long n = std::stol(tok);
        long z = r.expect_int("observation id");
        long n2 = r.expect_int("successor node");
        long a = r.expect_int("action id");
        double p = r.expect_double("probability");
        check_nz(n, z);
        check_nz(n2, 0);
        if (a < 0 || a >= fsc.num_actions) r.fail("action out of range");
        JointDist& d = fsc.sigma[fsc.row(static_cast<int>(n),
                                         static_cast<int>(z))];
        d.nodes.push_back(static_cast<int>(n2));
        d.actions.push_back(static_cast<int>(a));
        d.probs.push_back(p);
      }
    } else {
      if (!fsc.sigma.empty()) r.fail("file mixes split and combined forms");
      bool is_delta = tok == "delta";
      if (fsc.delta.empty()) {
        fsc.delta.resize(rows);
        fsc.eta.resize(rows);
      }
      while (true) {
        tok = r.expect("row or section");
        if (is_keyword(tok)) break;
        long n = std::stol(tok);
        long z = r.expect_int("observation id");
        long x = r.expect_int(is_delta ? "action id" : "successor node");
        double p = r.expect_double("probability");
        check_nz(n, z);
        std::size_t idx = fsc.row(static_cast<int>(n), static_cast<int>(z));
        if (is_delta) {
          if (x < 0 || x >= fsc.num_actions) r.fail("action out of range");
          fsc.delta[idx].actions.push_back(static_cast<int>(x));
          fsc.delta[idx].probs.push_back(p);
        } else {
          if (x < 0 || x >= fsc.num_nodes) r.fail("node out of range");
          fsc.eta[idx].nodes.push_back(static_cast<int>(x));
          fsc.eta[idx].probs.push_back(p);
        }
      }
    }
  }
  if (tok != "end") r.fail("expected 'end', got '" + tok + "'");
  if (fsc.delta.empty() && fsc.sigma.empty())
    r.fail("fsc has neither delta/eta nor sigma rows");
  try {
    validate(fsc);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return fsc;
}

void save_fsc(const Fsc& fsc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "fsc\n";
  out << "nodes " << fsc.num_nodes << "\n";
  out << "initial " << fsc.initial_node << "\n";
  out << "observations " << fsc.num_observations << "\n";
  out << "actions " << fsc.num_actions << "\n";
  if (fsc.combined()) {
    out << "sigma\n";
    for (int n = 0; n < fsc.num_nodes; ++n)
      for (int z = 0; z < fsc.num_observations; ++z) {
        const JointDist& d = fsc.joint_dist(n, z);
        for (int k = 0; k < d.size(); ++k)
          out << n << " " << z << " " << d.nodes[k] << " " << d.actions[k]
              << " " << format_double(d.probs[k]) << "\n";
      }
  } else {
    out << "delta\n";
    for (int n = 0; n < fsc.num_nodes; ++n)
      for (int z = 0; z < fsc.num_observations; ++z) {
        const ActionDist& d = fsc.action_dist(n, z);
        for (std::size_t k = 0; k < d.actions.size(); ++k)
          out << n << " " << z << " " << d.actions[k] << " "
              << format_double(d.probs[k]) << "\n";
      }
    out << "eta\n";
    for (int n = 0; n < fsc.num_nodes; ++n)
      for (int z = 0; z < fsc.num_observations; ++z) {
        const NodeDist& d = fsc.node_dist(n, z);
        for (std::size_t k = 0; k < d.nodes.size(); ++k)
          out << n << " " << z << " " << d.nodes[k] << " "
              << format_double(d.probs[k]) << "\n";
      }
  }
  out << "end\n";
}

TrajectoryDataset load_dataset(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  TokenReader r(in, path);
  std::string kind = r.expect("dataset keyword");
  if (kind != "dataset") r.fail("expected 'dataset', got '" + kind + "'");
  TrajectoryDataset data;
  std::string tok = r.expect("header field");
  long count = -1;
  while (true) {
    if (tok == "observations")
      data.num_observations = static_cast<int>(r.expect_int("count"));
    else if (tok == "actions")
      data.num_actions = static_cast<int>(r.expect_int("count"));
    else if (tok == "sequences") {
      count = r.expect_int("sequence count");
      break;
    } else {
      r.fail("unexpected token '" + tok + "' in dataset header");
    }
    tok = r.expect("header field");
  }
  if (data.num_observations <= 0 || data.num_actions <= 0 || count < 0)
    r.fail("dataset header incomplete");
  data.sequences.reserve(count);
  for (long i = 0; i < count; ++i) {
    long len = r.expect_int("sequence length");
    if (len <= 0) r.fail("sequence length must be positive");
    std::vector<std::pair<int, int>> seq;
    seq.reserve(len);
    for (long t = 0; t < len; ++t) {
      long z = r.expect_int("observation id");
      long a = r.expect_int("action id");
      if (z < 0 || z >= data.num_observations)
        r.fail("observation out of range");
      if (a < 0 || a >= data.num_actions) r.fail("action out of range");
      seq.emplace_back(static_cast<int>(z), static_cast<int>(a));
    }
    data.sequences.push_back(std::move(seq));
  }
  std::string end = r.expect("'end'");
  if (end != "end") r.fail("expected 'end', got '" + end + "'");
  data.meta.total_steps = data.total_pairs();
  return data;
}

void save_dataset(const TrajectoryDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "dataset\n";
  if (!data.meta.source.empty()) out << "# source " << data.meta.source << "\n";
  out << "# seed " << data.meta.seed << "\n";
  out << "observations " << data.num_observations << "\n";
  out << "actions " << data.num_actions << "\n";
  out << "sequences " << data.sequences.size() << "\n";
  for (const auto& seq : data.sequences) {
    out << seq.size();
    for (const auto& [z, a] : seq) out << " " << z << " " << a;
    out << "\n";
  }
  out << "end\n";
}

}  // namespace fscplan
