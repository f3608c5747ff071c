#pragma once

// Category schema: the M output categories of a sequential multi-output task
// and the value set of each, including the distinguished null value. Category
// order is fixed at construction and shared by every grid and model in a run.

#include <stdexcept>
#include <string>
#include <vector>

namespace camell {

struct Category {
  std::string name;
  std::vector<std::string> values;
  std::size_t null_index = 0;
};

class CategorySchema {
 public:
  CategorySchema() = default;

  explicit CategorySchema(std::vector<Category> categories)
      : categories_(std::move(categories)) {
    validate();
  }

  std::size_t size() const { return categories_.size(); }
  const Category& category(std::size_t m) const { return categories_.at(m); }
  const std::vector<Category>& categories() const { return categories_; }

  std::size_t n_values(std::size_t m) const {
    return categories_.at(m).values.size();
  }
  std::size_t null_index(std::size_t m) const {
    return categories_.at(m).null_index;
  }

  void validate() const {
    if (categories_.empty())
      throw std::invalid_argument("schema: need at least one category");
    for (const auto& c : categories_) {
      if (c.values.size() < 2)
        throw std::invalid_argument("schema: category '" + c.name +
                                    "' needs at least 2 values");
      if (c.null_index >= c.values.size())
        throw std::invalid_argument("schema: category '" + c.name +
                                    "' has out-of-range null index");
      for (std::size_t i = 0; i < c.values.size(); ++i)
        for (std::size_t j = i + 1; j < c.values.size(); ++j)
          if (c.values[i] == c.values[j])
            throw std::invalid_argument("schema: duplicate value '" +
                                        c.values[i] + "' in category '" +
                                        c.name + "'");
    }
  }

 private:
  std::vector<Category> categories_;
};

}  // namespace camell
