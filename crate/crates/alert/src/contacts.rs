//! Emergency contact management with JSON-lines persistence.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Caretaker,
    Doctor,
    Hospital,
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "caretaker" => Ok(Role::Caretaker),
            "doctor" => Ok(Role::Doctor),
            "hospital" => Ok(Role::Hospital),
            other => Err(format!(
                "unknown role {other:?} (use caretaker|doctor|hospital)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub name: String,
    pub phone: String,
    pub role: Role,
}

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("contact {name:?} has an empty phone token")]
    EmptyPhone { name: String },
    #[error("contact name must not be empty")]
    EmptyName,
    #[error("a contact named {name:?} already exists")]
    Duplicate { name: String },
    #[error("no contact named {name:?}")]
    Unknown { name: String },
    #[error("failed to access contacts file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("contacts file line {line} is not a valid contact: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Insertion-ordered contact list. Names are unique so deletion by name is
/// unambiguous.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactBook {
    contacts: Vec<Contact>,
}

impl ContactBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, contact: Contact) -> Result<(), ContactError> {
        if contact.name.trim().is_empty() {
            return Err(ContactError::EmptyName);
        }
        if contact.phone.trim().is_empty() {
            return Err(ContactError::EmptyPhone { name: contact.name });
        }
        if self.contacts.iter().any(|c| c.name == contact.name) {
            return Err(ContactError::Duplicate { name: contact.name });
        }
        self.contacts.push(contact);
        Ok(())
    }

    pub fn delete(&mut self, name: &str) -> Result<Contact, ContactError> {
        match self.contacts.iter().position(|c| c.name == name) {
            Some(idx) => Ok(self.contacts.remove(idx)),
            None => Err(ContactError::Unknown {
                name: name.to_owned(),
            }),
        }
    }

    /// Contacts in insertion order.
    pub fn list(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Contact> {
        self.contacts.iter().filter(move |c| c.role == role)
    }

    pub fn caretaker_count(&self) -> usize {
        self.with_role(Role::Caretaker).count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContactError> {
        let path = path.as_ref();
        let mut out = String::new();
        for c in &self.contacts {
            out.push_str(&serde_json::to_string(c).expect("contacts serialize"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| ContactError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContactError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ContactError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut book = Self::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let contact: Contact =
                serde_json::from_str(line).map_err(|source| ContactError::Parse {
                    line: line_no + 1,
                    source,
                })?;
            book.add(contact)?;
        }
        Ok(book)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contact(name: &str, role: Role) -> Contact {
        Contact {
            name: name.into(),
            phone: format!("+1-555-{name}"),
            role,
        }
    }

    #[test]
    fn add_delete_list() {
        let mut book = ContactBook::new();
        book.add(contact("ana", Role::Caretaker)).unwrap();
        book.add(contact("bo", Role::Doctor)).unwrap();
        book.delete("ana").unwrap();
        assert_eq!(book.list().len(), 1);
        assert_eq!(book.list()[0].name, "bo");
    }

    #[test]
    fn delete_from_empty_is_an_error() {
        let mut book = ContactBook::new();
        assert!(matches!(
            book.delete("ghost"),
            Err(ContactError::Unknown { .. })
        ));
    }

    #[test]
    fn empty_phone_is_rejected() {
        let mut book = ContactBook::new();
        let mut c = contact("ana", Role::Caretaker);
        c.phone = "  ".into();
        assert!(matches!(book.add(c), Err(ContactError::EmptyPhone { .. })));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut book = ContactBook::new();
        book.add(contact("ana", Role::Caretaker)).unwrap();
        assert!(matches!(
            book.add(contact("ana", Role::Doctor)),
            Err(ContactError::Duplicate { .. })
        ));
    }

    #[test]
    fn save_load_preserves_order() {
        let mut book = ContactBook::new();
        book.add(contact("zoe", Role::Caretaker)).unwrap();
        book.add(contact("ana", Role::Doctor)).unwrap();
        let path = std::env::temp_dir().join(format!(
            "epilnet-contacts-{}.jsonl",
            std::process::id()
        ));
        book.save(&path).unwrap();
        let loaded = ContactBook::load(&path).unwrap();
        assert_eq!(loaded, book);
        std::fs::remove_file(path).ok();
    }
}
