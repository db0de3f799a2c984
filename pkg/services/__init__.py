# Services Package
from services.report_service import ReportService, format_value
