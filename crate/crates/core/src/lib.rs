//! Core of a dyadic expressive-messaging service.
//!
//! * [`library`]: the action library and its reaction-candidate graph.
//! * [`interpreter`]: keyword, negation, valence and embedding providers.
//! * [`recommend`]: the weighted action scorer and preference store.
//! * [`narrative`]: personal stories, tags and micronarrative captions.
//! * [`store`]: users, contacts, dyads and the exchange log.

pub mod clock;
pub mod interpreter;
pub mod lexicon;
pub mod narrative;
pub mod library;
pub mod preference;
pub mod recommend;
pub mod store;

pub use interpreter::{TextAnalysis, TextInterpreter};
pub use library::{Action, ActionLibrary, Emotion, InteractionRole};
pub use narrative::{Micronarrative, Narrator, PersonalStory, StoryBook, TagSet};
pub use preference::PreferenceStore;
pub use recommend::{RecommendationContext, Recommender, ScoreBreakdown, Weights};
pub use store::{ConversationStore, ExchangeRecord};
