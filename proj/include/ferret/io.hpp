// Copyright 2026 The ferret-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FERRET_IO_HPP_
#define FERRET_IO_HPP_

#include <map>
#include <string>
#include <vector>

namespace ferret {

// Shortest representation that round-trips the exact double (to_chars).
// Every numeric field written to disk goes through this, which is what makes
// rerun outputs byte-identical.
std::string FormatDouble(double value);

double ParseDouble(const std::string& text);

std::vector<std::string> SplitCsvLine(const std::string& line);

// key=value lines, one per entry, insertion order preserved on write.
struct KeyValueFile {
  std::vector<std::pair<std::string, std::string>> entries;

  void Set(const std::string& key, const std::string& value);
  void SetDouble(const std::string& key, double value);
  const std::string* Find(const std::string& key) const;
  std::string GetOr(const std::string& key, const std::string& fallback) const;

  std::string Serialize() const;
  static KeyValueFile Parse(const std::string& text);
};

std::string ReadFileOrThrow(const std::string& path);
void WriteFile(const std::string& path, const std::string& contents);

}  // namespace ferret

#endif  // FERRET_IO_HPP_
