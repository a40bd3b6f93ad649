use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::maps::ClassTable;

/// Shared four-class scheme used to compare datasets with different
/// taxonomies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u32)]
pub enum CommonClass {
    Neoplastic = 1,
    Inflammatory = 2,
    Epithelial = 3,
    Miscellaneous = 4,
}

impl CommonClass {
    pub const ALL: [CommonClass; 4] = [
        CommonClass::Neoplastic,
        CommonClass::Inflammatory,
        CommonClass::Epithelial,
        CommonClass::Miscellaneous,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            CommonClass::Neoplastic => "neoplastic",
            CommonClass::Inflammatory => "inflammatory",
            CommonClass::Epithelial => "epithelial",
            CommonClass::Miscellaneous => "miscellaneous",
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id)
    }

    pub fn names() -> BTreeMap<u32, String> {
        Self::ALL.iter().map(|c| (c.id(), c.name().to_string())).collect()
    }
}

/// Taxonomy a class table is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassScheme {
    /// Type ids 1 neoplastic, 2 inflammatory, 3 connective, 4 dead,
    /// 5 epithelial.
    PanNuke,
    /// Type ids 1 other, 2 inflammatory, 3 healthy epithelial,
    /// 4 dysplastic/malignant epithelial, 5 fibroblast, 6 muscle,
    /// 7 endothelial.
    Consep,
    Common,
}

/// Per-instance classes tagged with the scheme they are expressed in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeClasses {
    pub scheme: ClassScheme,
    pub classes: ClassTable,
}

/// `(scheme, source class) -> common class` lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMapping {
    tables: BTreeMap<ClassScheme, BTreeMap<u32, CommonClass>>,
}

impl Default for ClassMapping {
    fn default() -> Self {
        use CommonClass::*;
        let pannuke = BTreeMap::from([
            (1, Neoplastic),
            (2, Inflammatory),
            (3, Miscellaneous),
            (4, Miscellaneous),
            (5, Epithelial),
        ]);
        let consep = BTreeMap::from([
            (1, Miscellaneous),
            (2, Inflammatory),
            (3, Epithelial),
            (4, Neoplastic),
            (5, Miscellaneous),
            (6, Miscellaneous),
            (7, Miscellaneous),
        ]);
        let common = CommonClass::ALL.iter().map(|&c| (c.id(), c)).collect();
        Self {
            tables: BTreeMap::from([
                (ClassScheme::PanNuke, pannuke),
                (ClassScheme::Consep, consep),
                (ClassScheme::Common, common),
            ]),
        }
    }
}

impl ClassMapping {
    /// Replaces the table for one scheme. The common scheme always maps to
    /// itself and cannot be overridden.
    pub fn with_table(mut self, scheme: ClassScheme, table: BTreeMap<u32, CommonClass>) -> Result<Self> {
        if scheme == ClassScheme::Common {
            return Err(Error::InvalidArgument("the common scheme maps to itself".into()));
        }
        self.tables.insert(scheme, table);
        Ok(self)
    }

    pub fn map(&self, scheme: ClassScheme, class: u32) -> Result<CommonClass> {
        self.tables
            .get(&scheme)
            .and_then(|t| t.get(&class))
            .copied()
            .ok_or(Error::UnmappedClass { class })
    }
}

pub fn remap_classes(input: &SchemeClasses, mapping: &ClassMapping) -> Result<SchemeClasses> {
    let classes = input
        .classes
        .iter()
        .map(|(&label, &c)| Ok((label, mapping.map(input.scheme, c)?.id())))
        .collect::<Result<_>>()?;
    Ok(SchemeClasses {
        scheme: ClassScheme::Common,
        classes,
    })
}
