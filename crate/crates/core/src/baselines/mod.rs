//! Non-tree comparison models over one-hot or categorical inputs.

mod bayes;
mod decision_list;
mod encode;
mod logistic;
mod mlp;

pub use bayes::{train_bayes_net, BayesNetModel, BayesNetOptions, Structure};
pub use decision_list::{train_decision_list, DecisionListModel, DecisionListOptions, Rule};
pub use encode::OneHotEncoder;
pub use logistic::{train_logistic, LogisticModel, LogisticOptions};
pub use mlp::{train_mlp, MlpModel, MlpOptions};
