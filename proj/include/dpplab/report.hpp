// Copyright 2026 The dpp-lab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace dpplab {

using Json = nlohmann::json;

namespace detail {

inline void put_number(std::string &out, double v)
{
    if (std::isnan(v)) {
        out += "\"nan\"";
        return;
    }
    if (std::isinf(v)) {
        out += v > 0 ? "\"inf\"" : "\"-inf\"";
        return;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

inline void put_json(std::string &out, const Json &j, int indent, int depth)
{
    auto newline = [&](int d) {
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    switch (j.type()) {
    case Json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first)
                out += ',';
            first = false;
            newline(depth + 1);
            out += Json(it.key()).dump();
            out += ": ";
            put_json(out, it.value(), indent, depth + 1);
        }
        newline(depth);
        out += '}';
        return;
    }
    case Json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        // flat numeric arrays stay on one line
        bool flat = std::all_of(j.begin(), j.end(), [](const Json &e) { return e.is_primitive(); });
        out += '[';
        bool first = true;
        for (const auto &e : j) {
            if (!first)
                out += flat ? ", " : ",";
            first = false;
            if (!flat)
                newline(depth + 1);
            put_json(out, e, indent, depth + 1);
        }
        if (!flat)
            newline(depth);
        out += ']';
        return;
    }
    case Json::value_t::number_float:
        put_number(out, j.get<double>());
        return;
    default:
        out += j.dump();
    }
}

} // namespace detail

// Every float goes out with 17 significant digits; non-finite values become strings.
inline std::string dump_json(const Json &j, int indent = 2)
{
    std::string out;
    detail::put_json(out, j, indent, 0);
    out += '\n';
    return out;
}

// Tabular plot data written as RFC-4180 CSV.
struct Series {
    using Cell = std::variant<double, std::int64_t, std::string>;

    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    Series() = default;
    explicit Series(std::vector<std::string> cols) : columns(std::move(cols)) {}

    void add(std::vector<Cell> row)
    {
        require(row.size() == columns.size(), ErrorKind::precondition, "series row width mismatch");
        rows.push_back(std::move(row));
    }
};

namespace detail {

inline std::string csv_field(const std::string &s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"')
            q += '"';
        q += c;
    }
    return q + '"';
}

} // namespace detail

inline std::string to_csv(const Series &s)
{
    std::string out;
    auto line = [&](const std::vector<std::string> &fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i)
                out += ',';
            out += detail::csv_field(fields[i]);
        }
        out += "\r\n";
    };
    line(s.columns);
    for (const auto &r : s.rows) {
        std::vector<std::string> f;
        for (const auto &c : r) {
            if (const double *d = std::get_if<double>(&c)) {
                std::string t;
                detail::put_number(t, *d);
                if (!t.empty() && t.front() == '"')
                    t = t.substr(1, t.size() - 2);
                f.push_back(t);
            } else if (const auto *i = std::get_if<std::int64_t>(&c)) {
                f.push_back(std::to_string(*i));
            } else {
                f.push_back(std::get<std::string>(c));
            }
        }
        line(f);
    }
    return out;
}

inline void write_text(const std::string &path, const std::string &text)
{
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path + " for writing");
    os << text;
    os.close();
    require(!os.fail(), ErrorKind::io, "write to " + path + " failed");
}

} // namespace dpplab
