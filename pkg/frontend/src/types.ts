/**
 * Gateway payload shapes, transcribed from the JSON the server actually
 * sends. The console renders projections of these and nothing else.
 */

export interface StudentListItem {
  id: string;
  label: string;
}

export interface StudentDetail {
  student_id: string;
  first_name: string;
  last_name: string;
  address: string;
  contact_number: string;
  institution_name: string;
  department_name: string;
  degree_program: string;
  graduation_year: number;
}

export type RegisterTarget = 'library' | 'hostel' | 'campus';

export type DeptState = 'Clear' | 'Defaulter' | 'Unreachable';

export interface DeptEntry {
  status: DeptState;
  reason: string | null;
}

export interface Verification {
  student_id: string;
  departments: Record<string, DeptEntry>;
  overall: 'Clear' | 'Blocked';
}

export interface Certificate {
  certificate_id: string;
  student_id: string;
  programme_id: string;
  issued_at: string;
  verification: Verification;
}

/** Error envelope every non-2xx gateway reply carries. */
export interface GatewayErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
