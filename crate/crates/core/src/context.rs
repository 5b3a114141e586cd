use crate::backend::{RoleClients, TemplateSet};
use crate::knowledge::{Language, TokenCounter};

/// What every agent call of one run shares.
#[derive(Clone, Copy, Debug)]
pub struct CallContext<'a> {
    pub question: &'a str,
    pub templates: &'a TemplateSet,
    pub clients: &'a RoleClients,
    pub counter: &'a TokenCounter,
}

impl CallContext<'_> {
    pub fn language(&self) -> Language {
        self.templates.language()
    }
}
