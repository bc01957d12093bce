/**
 * Pure view-model derivations. Every enable/disable decision the screens
 * make is computed here from the last gateway response, nothing else, so
 * the whole layer is testable without a DOM.
 */

import type { DeptState, StudentDetail, StudentListItem, Verification } from './types.js';

export interface ConsoleStudentRow {
  studentId: string;
  fullName: string;
  department: string;
  programme: string;
}

export interface DeptChip {
  department: string;
  state: DeptState;
  reasons: string[];
}

export interface VerificationView {
  studentId: string;
  chips: DeptChip[];
  overall: 'Clear' | 'Blocked';
  issueEnabled: boolean;
}

export function consoleStudentRow(detail: StudentDetail): ConsoleStudentRow {
  return {
    studentId: detail.student_id,
    fullName: `${detail.first_name} ${detail.last_name}`,
    department: detail.department_name,
    programme: detail.degree_program,
  };
}

/** Case-insensitive substring match on id or name; blank query keeps all. */
export function filterStudents(items: StudentListItem[], query: string): StudentListItem[] {
  const needle = query.trim().toLowerCase();
  if (needle === '') {
    return items;
  }
  return items.filter(
    (item) =>
      item.id.toLowerCase().includes(needle) || item.label.toLowerCase().includes(needle),
  );
}

/**
 * One reason string to one line per offending item. The gateway packs
 * lists as "label: a, b"; unpacking keeps each line readable on its own:
 *
 *   "outstanding books: B001, B002"
 *     -> ["outstanding books: B001", "outstanding books: B002"]
 */
export function reasonItems(reason: string | null): string[] {
  if (reason === null) {
    return [];
  }
  const sep = reason.indexOf(': ');
  if (sep < 0) {
    return [reason];
  }
  const label = reason.slice(0, sep);
  const items = reason.slice(sep + 2).split(', ');
  if (items.length === 1) {
    return [reason];
  }
  return items.map((item) => `${label}: ${item}`);
}

export function verificationView(verification: Verification): VerificationView {
  const chips = Object.entries(verification.departments).map(([department, entry]) => ({
    department,
    state: entry.status,
    reasons: reasonItems(entry.reason),
  }));
  return {
    studentId: verification.student_id,
    chips,
    overall: verification.overall,
    issueEnabled: verification.overall === 'Clear',
  };
}

/** Gateway errors are shown verbatim, code first. */
export function faultBanner(fault: { code: string; message: string }): string {
  return `${fault.code}: ${fault.message}`;
}

/**
 * A 409 on certificate issue carries the full verification breakdown in
 * the error detail. Recognise that shape so the screen can render the
 * same chips it would after an explicit verify.
 */
export function blockedBreakdown(detail: unknown): Verification | null {
  if (typeof detail !== 'object' || detail === null) {
    return null;
  }
  const record = detail as Record<string, unknown>;
  if (typeof record.student_id !== 'string') {
    return null;
  }
  if (typeof record.departments !== 'object' || record.departments === null) {
    return null;
  }
  if (record.overall !== 'Clear' && record.overall !== 'Blocked') {
    return null;
  }
  return detail as Verification;
}
