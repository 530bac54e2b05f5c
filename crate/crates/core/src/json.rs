//! JSON encoding of complex vectors and matrices.
//!
//! A complex number is a `[re, im]` pair. A matrix is an object
//! `{"rows": r, "cols": c, "data": [[[re, im], ...], ...]}` with `data` in row-major
//! order (one inner array per row). A vector is a plain array of pairs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMat, CVec, C64};

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<Vec<[f64; 2]>>,
}

fn pair(c: &C64) -> [f64; 2] {
    [c.re, c.im]
}

fn to_doc(m: &CMat) -> MatrixDoc {
    MatrixDoc {
        rows: m.nrows(),
        cols: m.ncols(),
        data: m.row_iter().map(|r| r.iter().map(pair).collect()).collect(),
    }
}

fn from_doc(doc: MatrixDoc) -> Result<CMat, String> {
    if doc.data.len() != doc.rows || doc.data.iter().any(|r| r.len() != doc.cols) {
        return Err(format!(
            "matrix data does not match declared shape {}x{}",
            doc.rows, doc.cols
        ));
    }
    Ok(CMat::from_fn(doc.rows, doc.cols, |i, j| {
        let [re, im] = doc.data[i][j];
        C64::new(re, im)
    }))
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_doc(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        from_doc(MatrixDoc::deserialize(d)?).map_err(D::Error::custom)
    }
}

pub mod matrix_opt {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_doc).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMat>, D::Error> {
        Option::<MatrixDoc>::deserialize(d)?
            .map(from_doc)
            .transpose()
            .map_err(D::Error::custom)
    }
}

pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_doc).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        Vec::<MatrixDoc>::deserialize(d)?
            .into_iter()
            .map(from_doc)
            .collect::<Result<_, _>>()
            .map_err(D::Error::custom)
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVec, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVec, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(CVec::from_iterator(
            pairs.len(),
            pairs.into_iter().map(|[re, im]| C64::new(re, im)),
        ))
    }
}

pub mod vector_list {
    use super::*;

    pub fn serialize<S: Serializer>(vs: &[CVec], s: S) -> Result<S::Ok, S::Error> {
        vs.iter()
            .map(|v| v.iter().map(pair).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVec>, D::Error> {
        let lists = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(lists
            .into_iter()
            .map(|p| CVec::from_iterator(p.len(), p.into_iter().map(|[re, im]| C64::new(re, im))))
            .collect())
    }
}
