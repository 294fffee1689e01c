// Copyright 2026 The trellis authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trellis/common.hpp"

namespace trellis {

// Finite type hierarchy. Type 0 is always "top". Unification of two types
// succeeds iff they have a unique most general common subtype.
class TypeLattice {
 public:
  TypeLattice() {
    types_.intern("top");
    parents_.push_back({});
  }

  int add_type(const std::string& name, const std::vector<std::string>& parents = {}) {
    if (types_.find(name)) throw ValidationError("duplicate type: " + name);
    int id = types_.intern(name);
    std::vector<int> ps;
    for (const auto& p : parents) {
      auto pid = types_.find(p);
      if (!pid) throw ValidationError("unknown parent type '" + p + "' of " + name);
      ps.push_back(*pid);
    }
    if (ps.empty()) ps.push_back(0);
    parents_.push_back(ps);
    closed_ = false;
    return id;
  }

  std::optional<int> find(const std::string& name) const { return types_.find(name); }
  int require(const std::string& name) const {
    auto id = types_.find(name);
    if (!id) throw ValidationError("unknown type: " + name);
    return *id;
  }
  const std::string& name(int id) const { return types_.name(id); }
  int size() const { return types_.size(); }

  int intern_feature(const std::string& name) { return features_.intern(name); }
  const std::string& feature_name(int id) const { return features_.name(id); }

  // a <= b (a is b or a subtype of b).
  bool subtype(int a, int b) const {
    close();
    return ancestors_[a][b];
  }

  // Unique most general common subtype, or absent when none or ambiguous.
  std::optional<int> meet(int a, int b) const {
    if (a == b) return a;
    close();
    if (ancestors_[a][b]) return a;
    if (ancestors_[b][a]) return b;
    std::vector<int> common;
    for (int t = 0; t < size(); ++t)
      if (ancestors_[t][a] && ancestors_[t][b]) common.push_back(t);
    std::vector<int> maximal;
    for (int t : common) {
      bool dominated = false;
      for (int u : common)
        if (u != t && ancestors_[t][u]) { dominated = true; break; }
      if (!dominated) maximal.push_back(t);
    }
    if (maximal.size() == 1) return maximal[0];
    return std::nullopt;
  }

 private:
  void close() const {
    if (closed_) return;
    int n = size();
    ancestors_.assign(n, std::vector<bool>(n, false));
    // add_type interns parents first, so parent ids are always smaller and a
    // single pass in id order closes the relation.
    for (int t = 0; t < n; ++t) {
      ancestors_[t][t] = true;
      ancestors_[t][0] = true;
      for (int p : parents_[t])
        for (int a = 0; a < n; ++a)
          if (ancestors_[p][a]) ancestors_[t][a] = true;
    }
    closed_ = true;
  }

  SymbolTable types_;
  SymbolTable features_;
  std::vector<std::vector<int>> parents_;
  mutable std::vector<std::vector<bool>> ancestors_;
  mutable bool closed_ = false;
};

// Typed feature-structure graph. Nodes carry a type and sorted feature arcs.
// Values are immutable once built; unification always works on copies.
struct Fs {
  struct Node {
    int type = 0;
    std::vector<std::pair<int, int>> arcs;  // (feature id, node index), sorted
  };
  std::vector<Node> nodes;

  int add_node(int type) {
    nodes.push_back(Node{type, {}});
    return static_cast<int>(nodes.size()) - 1;
  }
  void add_arc(int from, int feature, int to) {
    auto& arcs = nodes[from].arcs;
    auto it = std::lower_bound(arcs.begin(), arcs.end(),
                               std::make_pair(feature, -1));
    if (it != arcs.end() && it->first == feature)
      throw ValidationError("duplicate feature on node");
    arcs.insert(it, {feature, to});
  }
};

namespace detail {

inline bool fs_acyclic_visit(const Fs& fs, int node, std::vector<int>& state) {
  if (state[node] == 1) return false;
  if (state[node] == 2) return true;
  state[node] = 1;
  for (auto [f, c] : fs.nodes[node].arcs)
    if (!fs_acyclic_visit(fs, c, state)) return false;
  state[node] = 2;
  return true;
}

}  // namespace detail

inline bool fs_acyclic(const Fs& fs, int root) {
  std::vector<int> state(fs.nodes.size(), 0);
  return detail::fs_acyclic_visit(fs, root, state);
}

// Canonical text form: node numbers assigned in first-visit order over
// feature-sorted arcs, so two graphs are isomorphic iff the keys are equal.
inline std::string fs_canonical_key(const Fs& fs, int root) {
  std::string out;
  std::map<int, int> seen;
  std::vector<std::pair<int, int>> stack;  // (node, depth marker unused)
  struct Walker {
    const Fs& fs;
    std::map<int, int>& seen;
    std::string& out;
    void walk(int node) {
      auto it = seen.find(node);
      if (it != seen.end()) {
        out += "@" + std::to_string(it->second);
        return;
      }
      int id = static_cast<int>(seen.size());
      seen.emplace(node, id);
      out += "[" + std::to_string(id) + ":t" + std::to_string(fs.nodes[node].type);
      for (auto [f, c] : fs.nodes[node].arcs) {
        out += " f" + std::to_string(f) + "=";
        walk(c);
      }
      out += "]";
    }
  } w{fs, seen, out};
  w.walk(root);
  return out;
}

inline bool fs_equal(const Fs& a, int ra, const Fs& b, int rb) {
  return fs_canonical_key(a, ra) == fs_canonical_key(b, rb);
}

// Human-readable print with #n tags for re-entrant nodes.
inline std::string fs_to_string(const Fs& fs, int root, const TypeLattice& tl) {
  // Count visits to find shared nodes.
  std::map<int, int> visits;
  struct Counter {
    const Fs& fs;
    std::map<int, int>& visits;
    void walk(int n) {
      if (++visits[n] > 1) return;
      for (auto [f, c] : fs.nodes[n].arcs) walk(c);
    }
  } counter{fs, visits};
  counter.walk(root);
  std::map<int, int> tags;
  std::string out;
  struct Printer {
    const Fs& fs;
    const TypeLattice& tl;
    std::map<int, int>& visits;
    std::map<int, int>& tags;
    std::string& out;
    void walk(int n) {
      auto it = tags.find(n);
      if (it != tags.end()) {
        out += "#" + std::to_string(it->second);
        return;
      }
      if (visits[n] > 1) {
        int tag = static_cast<int>(tags.size()) + 1;
        tags.emplace(n, tag);
        out += "#" + std::to_string(tag) + "=";
      }
      const auto& node = fs.nodes[n];
      if (node.arcs.empty()) {
        out += tl.name(node.type);
        return;
      }
      out += "(" + tl.name(node.type);
      for (auto [f, c] : node.arcs) {
        out += " (" + tl.feature_name(f) + " ";
        walk(c);
        out += ")";
      }
      out += ")";
    }
  } printer{fs, tl, visits, tags, out};
  printer.walk(root);
  return out;
}

// Destructive-free unification: inputs are copied into a session arena and
// merged with union-find; extract() rebuilds an independent graph.
class UnifySession {
 public:
  explicit UnifySession(const TypeLattice& tl) : tl_(tl) {}

  // Copies all nodes of fs into the session; returns the index offset.
  int add(const Fs& fs) {
    int offset = static_cast<int>(nodes_.size());
    for (const auto& n : fs.nodes) {
      Node copy;
      copy.type = n.type;
      for (auto [f, c] : n.arcs) copy.arcs.push_back({f, c + offset});
      nodes_.push_back(std::move(copy));
      uf_.push_back(static_cast<int>(uf_.size()));
    }
    return offset;
  }

  bool unify(int a, int b) {
    std::vector<std::pair<int, int>> work{{a, b}};
    while (!work.empty()) {
      auto [x, y] = work.back();
      work.pop_back();
      int rx = find(x), ry = find(y);
      if (rx == ry) continue;
      auto m = tl_.meet(nodes_[rx].type, nodes_[ry].type);
      if (!m) return false;
      // Merge ry into rx.
      uf_[ry] = rx;
      nodes_[rx].type = *m;
      std::vector<std::pair<int, int>> merged;
      auto& xa = nodes_[rx].arcs;
      auto& ya = nodes_[ry].arcs;
      size_t i = 0, j = 0;
      while (i < xa.size() || j < ya.size()) {
        if (j == ya.size() || (i < xa.size() && xa[i].first < ya[j].first)) {
          merged.push_back(xa[i++]);
        } else if (i == xa.size() || ya[j].first < xa[i].first) {
          merged.push_back(ya[j++]);
        } else {
          work.push_back({xa[i].second, ya[j].second});
          merged.push_back(xa[i]);
          ++i;
          ++j;
        }
      }
      nodes_[rx].arcs = std::move(merged);
    }
    return true;
  }

  // Rebuilds the graph reachable from `root` as an independent Fs with the
  // root at index 0. Absent when unification produced a cyclic graph.
  std::optional<Fs> extract(int root) {
    Fs out;
    std::map<int, int> mapped;
    if (!copy_rec(find(root), out, mapped)) return std::nullopt;
    return out;
  }

 private:
  struct Node {
    int type;
    std::vector<std::pair<int, int>> arcs;
  };

  int find(int x) {
    while (uf_[x] != x) {
      uf_[x] = uf_[uf_[x]];
      x = uf_[x];
    }
    return x;
  }

  bool copy_rec(int rep, Fs& out, std::map<int, int>& mapped) {
    auto it = mapped.find(rep);
    if (it != mapped.end()) {
      if (it->second == -1) return false;  // back edge: cycle
      return true;
    }
    mapped[rep] = -1;
    int idx = out.add_node(nodes_[rep].type);
    // Reserve the slot now, then fill arcs after children are copied.
    std::vector<std::pair<int, int>> arcs;
    for (auto [f, c] : nodes_[rep].arcs) {
      int rc = find(c);
      if (!copy_rec(rc, out, mapped)) return false;
      arcs.push_back({f, mapped[rc]});
    }
    out.nodes[idx].arcs = std::move(arcs);
    mapped[rep] = idx;
    return true;
  }

  const TypeLattice& tl_;
  std::vector<Node> nodes_;
  std::vector<int> uf_;
};

// Pairwise convenience wrapper over UnifySession.
inline std::optional<Fs> unify_fs(const Fs& a, int ra, const Fs& b, int rb,
                                  const TypeLattice& tl) {
  UnifySession session(tl);
  int oa = session.add(a);
  int ob = session.add(b);
  if (!session.unify(ra + oa, rb + ob)) return std::nullopt;
  return session.extract(ra + oa);
}

// ---------------------------------------------------------------------------
// S-expression reader for the grammar file format. ';' starts a comment.
// Re-entrancy tags: '#1=' before an element defines tag 1, '#1' references it.

struct Sexpr {
  bool is_atom = false;
  std::string atom;
  std::vector<Sexpr> items;
  int tag = 0;  // 0 = untagged; >0 set by a preceding '#n=' token

  const Sexpr& at(size_t i) const {
    if (i >= items.size()) throw ParseError("s-expression too short");
    return items[i];
  }
  const std::string& head() const {
    if (is_atom) return atom;
    if (items.empty() || !items[0].is_atom)
      throw ParseError("expected an atom head");
    return items[0].atom;
  }
};

namespace detail {

inline std::vector<std::string> sexpr_tokens(const std::string& text) {
  std::vector<std::string> toks;
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == ';') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(' || c == ')') {
      toks.push_back(std::string(1, c));
      ++i;
    } else if (c == '"') {
      size_t j = i + 1;
      while (j < text.size() && text[j] != '"') ++j;
      if (j == text.size()) throw ParseError("unterminated string literal");
      toks.push_back(text.substr(i + 1, j - i - 1));
      i = j + 1;
    } else {
      size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
             text[j] != '(' && text[j] != ')' && text[j] != ';')
        ++j;
      toks.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  return toks;
}

inline Sexpr parse_sexpr_at(const std::vector<std::string>& toks, size_t& pos);

inline Sexpr parse_sexpr_element(const std::vector<std::string>& toks, size_t& pos) {
  const std::string& t = toks[pos];
  // Tag definition '#n=' binds to the following element; '#n=atom' is the
  // inline form for tagged atoms.
  if (t.size() > 2 && t[0] == '#') {
    size_t eq = t.find_first_not_of("0123456789", 1);
    if (eq != std::string::npos && eq > 1 && t[eq] == '=') {
      int tag = static_cast<int>(parse_long(t.substr(1, eq - 1), "tag"));
      if (eq + 1 < t.size()) {
        Sexpr a;
        a.is_atom = true;
        a.atom = t.substr(eq + 1);
        a.tag = tag;
        ++pos;
        return a;
      }
      ++pos;
      if (pos >= toks.size()) throw ParseError("dangling tag definition");
      Sexpr e = parse_sexpr_at(toks, pos);
      e.tag = tag;
      return e;
    }
  }
  return parse_sexpr_at(toks, pos);
}

inline Sexpr parse_sexpr_at(const std::vector<std::string>& toks, size_t& pos) {
  if (pos >= toks.size()) throw ParseError("unexpected end of s-expression");
  const std::string& t = toks[pos];
  if (t == "(") {
    Sexpr list;
    ++pos;
    while (pos < toks.size() && toks[pos] != ")")
      list.items.push_back(parse_sexpr_element(toks, pos));
    if (pos >= toks.size()) throw ParseError("missing ')'");
    ++pos;
    return list;
  }
  if (t == ")") throw ParseError("unexpected ')'");
  Sexpr a;
  a.is_atom = true;
  a.atom = t;
  ++pos;
  return a;
}

}  // namespace detail

inline std::vector<Sexpr> parse_sexprs(const std::string& text) {
  auto toks = detail::sexpr_tokens(text);
  std::vector<Sexpr> out;
  size_t pos = 0;
  while (pos < toks.size()) out.push_back(detail::parse_sexpr_element(toks, pos));
  return out;
}

// Builds a feature-structure node from an s-expression of the form
//   TYPE  |  (TYPE (feat FS)...)  |  #n
// Tags live in `tagmap` scoped by the caller (one scope per rule or entry).
inline int build_fs_node(const Sexpr& e, Fs& fs, TypeLattice& tl,
                         std::map<int, int>& tagmap) {
  if (e.is_atom) {
    if (e.atom.size() > 1 && e.atom[0] == '#' &&
        e.atom.find_first_not_of("0123456789", 1) == std::string::npos) {
      int tag = static_cast<int>(parse_long(e.atom.substr(1), "tag"));
      auto it = tagmap.find(tag);
      if (it == tagmap.end())
        throw ParseError("reference to undefined tag #" + std::to_string(tag));
      return it->second;
    }
    int node = fs.add_node(tl.require(e.atom));
    if (e.tag) tagmap[e.tag] = node;
    return node;
  }
  if (e.items.empty() || !e.items[0].is_atom)
    throw ParseError("feature structure must start with a type atom");
  int node = fs.add_node(tl.require(e.items[0].atom));
  if (e.tag) tagmap[e.tag] = node;
  for (size_t i = 1; i < e.items.size(); ++i) {
    const Sexpr& pair = e.items[i];
    if (pair.is_atom || pair.items.size() != 2 || !pair.items[0].is_atom)
      throw ParseError("expected (feature value) pair in feature structure");
    int child = build_fs_node(pair.items[1], fs, tl, tagmap);
    fs.add_arc(node, tl.intern_feature(pair.items[0].atom), child);
  }
  return node;
}

}  // namespace trellis
