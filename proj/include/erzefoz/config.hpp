#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "erzefoz/analysis.hpp"
#include "erzefoz/dataset.hpp"
#include "erzefoz/zefoz_search.hpp"

namespace erzefoz {

// Flat "section.key" settings with typed validation. Unknown keys are rejected.
class RunConfig {
public:
    enum class Type { Int, UInt, Double, Bool, String };

    RunConfig();

    void load_file(const std::string& path);
    void load_text(const std::string& text);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    std::vector<std::string> keys() const;
    std::string canonical() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;

    Dataset dataset() const;
    std::vector<int> sites() const;
    SearchConfig search_config() const;
    SensitivityOptions sensitivity_options() const;
    Scalarization scalarization() const;

private:
    struct Entry {
        Type type;
        std::string value;
    };
    void define(const std::string& key, Type type, const std::string& def);
    std::map<std::string, Entry> entries_;
};

std::uint64_t fnv1a64(const std::string& s);
std::vector<double> parse_list(const std::string& s, std::size_t expect = 0);
std::pair<int, int> parse_transition(const std::string& s);
std::vector<std::pair<int, int>> parse_transitions(const std::string& s);

}  // namespace erzefoz
